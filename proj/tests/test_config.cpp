#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hwros/app/system.hpp"

using namespace hwros;
using namespace hwros::app;

namespace {

const char* kGolden = R"(
[ResourceGroup@ResourceGroupSobel]
node_3 = rosnode, "Sobel"
filter_service_msg = rossrvmsg, application_msgs, srv, SobelSrv
filter_server = rossrvs, node_3, filter_service_msg, "sobelservice", 10000

[ResourceGroup@ResourceGroupDIP]
node_2 = rosnode, "DIP"
filter_service_msg = rossrvmsg, application_msgs, srv, SobelSrv
filter_client = rossrvc, node_2, filter_service_msg, "sobelservice", 10000
image_msg = rosmsg, sensor_msgs, msg, Image
sub = rossub, node_2, image_msg, "/image_raw", 10000
pub = rospub, node_2, image_msg, "/image_filtered"
)";

}  // namespace

TEST_CASE("golden config parses to the exact object graph") {
  auto cfg = parse_config(kGolden);
  REQUIRE(cfg.groups.size() == 2);

  const auto& sobel = cfg.groups[0];
  CHECK(sobel.name == "ResourceGroupSobel");
  REQUIRE(sobel.decls.size() == 3);
  CHECK(sobel.decls[0] == ResourceDecl{"node_3", DeclKind::RosNode, {"\"Sobel\""}});
  CHECK(sobel.decls[1] ==
        ResourceDecl{"filter_service_msg", DeclKind::RosSrvMsg,
                     {"application_msgs", "srv", "SobelSrv"}});
  CHECK(sobel.decls[2] ==
        ResourceDecl{"filter_server", DeclKind::RosSrvs,
                     {"node_3", "filter_service_msg", "\"sobelservice\"", "10000"}});

  const auto& dip = cfg.groups[1];
  CHECK(dip.name == "ResourceGroupDIP");
  REQUIRE(dip.decls.size() == 6);
  CHECK(dip.decls[0] == ResourceDecl{"node_2", DeclKind::RosNode, {"\"DIP\""}});
  CHECK(dip.decls[2] ==
        ResourceDecl{"filter_client", DeclKind::RosSrvc,
                     {"node_2", "filter_service_msg", "\"sobelservice\"", "10000"}});
  CHECK(dip.decls[3] ==
        ResourceDecl{"image_msg", DeclKind::RosMsg, {"sensor_msgs", "msg", "Image"}});
  CHECK(dip.decls[4] ==
        ResourceDecl{"sub", DeclKind::RosSub, {"node_2", "image_msg", "\"/image_raw\"", "10000"}});
  CHECK(dip.decls[5] ==
        ResourceDecl{"pub", DeclKind::RosPub, {"node_2", "image_msg", "\"/image_filtered\""}});
}

TEST_CASE("render/parse round trip is stable") {
  auto cfg = parse_config(kGolden);
  const std::string rendered = render_config(cfg);
  auto reparsed = parse_config(rendered);
  CHECK(cfg == reparsed);
  CHECK(render_config(reparsed) == rendered);
}

TEST_CASE("empty text yields an empty config") {
  auto cfg = parse_config("");
  CHECK(cfg.groups.empty());
  CHECK(cfg.nodes.empty());
}

TEST_CASE("validation errors") {
  CHECK_THROWS_AS(parse_config("[ResourceGroup@G]\nx = rosfrob, a\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ResourceGroup@G]\n"
                               "m = rosmsg, sensor_msgs, msg, Image\n"
                               "x = rossub, nodeX, m, \"/t\", 10000\n"),
                  ConfigError);  // unresolved node reference
  CHECK_THROWS_AS(parse_config("[ResourceGroup@G]\n"
                               "n = rosnode, \"N\"\n"
                               "n = rosnode, \"M\"\n"),
                  ConfigError);  // duplicate name in group
  CHECK_THROWS_AS(parse_config("[ResourceGroup@G]\nn = rosnode, \"N\", extra\n"),
                  ConfigError);  // arity
  CHECK_THROWS_AS(parse_config("[ResourceGroup@G]\n"
                               "n = rosnode, \"N\"\n"
                               "m = rosmsg, sensor_msgs, msg, Image\n"
                               "s = rossub, n, m, \"/t\", 0\n"),
                  ConfigError);  // non-positive polling
  CHECK_THROWS_AS(parse_config("[ResourceGroup@G]\n"
                               "n = rosnode, \"N\"\n"
                               "m = rosmsg, sensor_msgs, msg, Image\n"
                               "s = rossrvs, n, m, \"x\", 10000\n"),
                  ConfigError);  // service endpoint needs a rossrvmsg
  CHECK_THROWS_AS(parse_config("[system]\nmap = a, hw, 0\nmap = b, hw, 0\nslots = 2\n"),
                  ConfigError);  // slot conflict
  CHECK_THROWS_AS(parse_config("[system]\nmap = a, hw, 5\nslots = 2\n"),
                  ConfigError);  // slot out of range
  CHECK_THROWS_AS(parse_config("stray = line\n"), ConfigError);
}

TEST_CASE("system section and messages section") {
  auto cfg = parse_config(
      "[system]\n"
      "slots = 3\n"
      "arena_mib = 32\n"
      "bind = 127.0.0.1:4500\n"
      "peer = 127.0.0.1:4501\n"
      "map = worker, hw, 1\n"
      "behavior = worker, copy\n"
      "bench_sizes = 4B, 8KiB\n"
      "bench_iters = 10\n"
      "\n"
      "[messages]\n"
      "g msg Extra { v: u32; }\n");
  CHECK(cfg.slot_count == 3);
  CHECK(cfg.arena_mib == 32);
  CHECK(cfg.bind == "127.0.0.1:4500");
  CHECK(cfg.peers == std::vector<std::string>{"127.0.0.1:4501"});
  REQUIRE(cfg.nodes.count("worker"));
  CHECK(cfg.nodes.at("worker").mapping == MappingChoice::Hardware);
  CHECK(cfg.nodes.at("worker").slot == 1);
  CHECK(cfg.nodes.at("worker").behavior == "copy");
  CHECK(cfg.bench_sizes == std::vector<std::string>{"4B", "8KiB"});
  CHECK(cfg.bench_iterations == 10);
  CHECK(cfg.message_defs.find("Extra") != std::string::npos);

  auto round = parse_config(render_config(cfg));
  CHECK(round == cfg);
}

TEST_CASE("golden config instantiates nodes and endpoints") {
  auto cfg = parse_config(kGolden);
  System sys(std::move(cfg));
  REQUIRE(sys.nodes().size() == 2);
  auto& sobel = sys.node("Sobel");
  auto& dip = sys.node("DIP");
  CHECK(sobel.endpoints.size() == 1);
  CHECK(dip.endpoints.size() == 3);

  auto server = sys.endpoint<mw::ServiceServer>("Sobel", "filter_server");
  CHECK(server->service() == "sobelservice");
  CHECK(server->polling_us() == 10000);
  auto client = sys.endpoint<mw::ServiceClient>("DIP", "filter_client");
  CHECK(client->service() == "sobelservice");
  CHECK(client->polling_us() == 10000);
  auto sub = sys.endpoint<mw::Subscriber>("DIP", "sub");
  CHECK(sub->topic() == "/image_raw");
  CHECK(sub->polling_us() == 10000);
  auto pub = sys.endpoint<mw::Publisher>("DIP", "pub");
  CHECK(pub->topic() == "/image_filtered");
  // Both service endpoints resolved to the same request/response types.
  CHECK(server->request_type() == client->request_type());
  CHECK(server->response_type() == client->response_type());
}

TEST_CASE("unknown behavior and message type are config errors") {
  CHECK_THROWS_AS(System(parse_config("[ResourceGroup@G]\n"
                                      "n = rosnode, \"N\"\n"
                                      "m = rosmsg, no_such, msg, Nope\n"
                                      "p = rospub, n, m, \"/t\"\n")),
                  ConfigError);
  auto cfg = parse_config("[ResourceGroup@G]\nn = rosnode, \"N\"\n"
                          "[system]\nbehavior = \"N\", frobnicate\n");
  System sys(std::move(cfg));
  CHECK_THROWS_AS(sys.start(), ConfigError);
}
