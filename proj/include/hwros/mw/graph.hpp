#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <variant>

#include "hwros/mem/arena.hpp"
#include "hwros/msg/instance.hpp"
#include "hwros/trace.hpp"

namespace hwros::mw {

using msg::MessageInstance;
using msg::TypeHandle;
using msg::TypeRegistry;

class Graph;
class Node;
class ServiceClient;

using Micros = std::chrono::microseconds;

enum class Mapping { Software, Hardware };

/// One queued delivery: correlation id (0 for plain pub/sub) plus the
/// arena-resident copy the receiver will own.
struct Envelope {
  u64 corr = 0;
  MessageInstance inst;
};

/// Hooks the transport installs to carry frames to remote peers.
struct ForwardHooks {
  std::function<void(const std::string& topic, u64 corr, const Bytes&)> publish;
  std::function<void(const std::string& peer, const std::string& service, u64 corr,
                     const Bytes&)> request;
  std::function<void(const std::string& peer, const std::string& service, u64 corr,
                     const Bytes&)> response;
};

struct EndpointInfo {
  enum class Role : u8 { Publisher = 0, Subscriber = 1, ServiceServer = 2, ServiceClient = 3 };
  Role role;
  std::string name;  // topic or service
  u64 fingerprint = 0;
};

class Publisher {
 public:
  const std::string& topic() const { return topic_; }
  TypeHandle type() const { return type_; }

 private:
  friend class Graph;
  Node* node_ = nullptr;
  std::string topic_;
  TypeHandle type_;
};

class Subscriber {
 public:
  const std::string& topic() const { return topic_; }
  TypeHandle type() const { return type_; }
  u64 polling_us() const { return polling_us_; }

  /// Blocks until a message is queued or the timeout elapses; returns the
  /// oldest envelope. The caller owns the instance and must free it.
  std::optional<MessageInstance> take(Micros timeout) {
    auto env = take_envelope(timeout);
    if (!env) return std::nullopt;
    return std::move(env->inst);
  }

  std::optional<Envelope> take_envelope(Micros timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !q_.empty(); })) return std::nullopt;
    Envelope env = std::move(q_.front());
    q_.pop_front();
    return env;
  }

  /// Take the oldest envelope whose correlation id matches (feedback path).
  std::optional<MessageInstance> take_matching(u64 corr, Micros timeout);

 private:
  friend class Graph;
  Node* node_ = nullptr;
  Graph* graph_ = nullptr;
  std::string topic_;
  TypeHandle type_;
  u32 depth_ = 8;
  u64 polling_us_ = 10000;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Envelope> q_;
};

class ServiceServer {
 public:
  const std::string& service() const { return service_; }
  TypeHandle request_type() const { return req_type_; }
  TypeHandle response_type() const { return resp_type_; }
  u64 polling_us() const { return polling_us_; }

  std::optional<std::pair<u64, MessageInstance>> take_request(Micros timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !q_.empty(); })) return std::nullopt;
    Envelope env = std::move(q_.front());
    q_.pop_front();
    return std::make_pair(env.corr, std::move(env.inst));
  }

 private:
  friend class Graph;
  struct Origin {
    ServiceClient* local = nullptr;
    std::string peer;  // non-empty for remote
    bool answered = false;
  };

  Node* node_ = nullptr;
  std::string service_;
  TypeHandle req_type_, resp_type_;
  u64 polling_us_ = 10000;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Envelope> q_;
  std::map<u64, Origin> pending_;
};

class ServiceClient {
 public:
  const std::string& service() const { return service_; }
  TypeHandle request_type() const { return req_type_; }
  TypeHandle response_type() const { return resp_type_; }
  u64 polling_us() const { return polling_us_; }

  std::optional<MessageInstance> take_response(u64 corr, Micros timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return responses_.count(corr) != 0; }))
      return std::nullopt;
    MessageInstance inst = std::move(responses_.at(corr));
    responses_.erase(corr);
    return inst;
  }

  /// Drops a pending response without waiting (used for action goal acks).
  void discard_response(u64 corr);

 private:
  friend class Graph;
  Node* node_ = nullptr;
  Graph* graph_ = nullptr;
  std::string service_;
  TypeHandle req_type_, resp_type_;
  u64 polling_us_ = 10000;

  std::mutex mu_;
  std::condition_variable cv_;
  std::map<u64, MessageInstance> responses_;
};

class ActionServer;
class ActionClient;

class Node {
 public:
  const std::string& name() const { return name_; }
  Mapping mapping() const { return mapping_; }
  void set_mapping(Mapping m) { mapping_ = m; }

 private:
  friend class Graph;
  std::string name_;
  Mapping mapping_ = Mapping::Software;
};

/// The process-local node graph: topics with many-to-many pub/sub, services
/// with correlated request/response, and actions composed of two services
/// plus a feedback topic. Inbound messages are stored in the arena before
/// delivery; receivers get arena addresses and own their copies.
class Graph {
 public:
  Graph(mem::Arena& arena, TypeRegistry& registry, u32 max_message_size = msg::kDefaultMaxMessageSize)
      : arena_(arena), reg_(registry), max_msg_(max_message_size) {
    std::random_device rd;
    corr_hi_ = (static_cast<u64>(rd()) | 1ull) << 32;
  }

  mem::Arena& arena() { return arena_; }
  TypeRegistry& registry() { return reg_; }
  Tracer& tracer() { return tracer_; }
  u32 max_message_size() const { return max_msg_; }

  std::shared_ptr<Node> create_node(const std::string& name) {
    if (name.empty()) throw Error("node name must be non-empty");
    std::lock_guard lock(gm_);
    if (nodes_.count(name)) throw Error("duplicate node name: " + name);
    auto n = std::make_shared<Node>();
    n->name_ = name;
    nodes_[name] = n;
    return n;
  }

  std::shared_ptr<Publisher> create_publisher(const std::shared_ptr<Node>& node,
                                              const std::string& topic, TypeHandle type) {
    if (topic.empty()) throw Error("topic name must be non-empty");
    std::lock_guard lock(gm_);
    bind_topic_type(topic, type);
    auto p = std::make_shared<Publisher>();
    p->node_ = node.get();
    p->topic_ = topic;
    p->type_ = type;
    topics_[topic].pubs.push_back(p);
    return p;
  }

  std::shared_ptr<Subscriber> create_subscriber(const std::shared_ptr<Node>& node,
                                                const std::string& topic, TypeHandle type,
                                                u32 queue_depth = 8, u64 polling_us = 10000) {
    if (topic.empty()) throw Error("topic name must be non-empty");
    if (queue_depth == 0) throw Error("queue depth must be >= 1");
    std::lock_guard lock(gm_);
    bind_topic_type(topic, type);
    auto s = std::make_shared<Subscriber>();
    s->node_ = node.get();
    s->graph_ = this;
    s->topic_ = topic;
    s->type_ = type;
    s->depth_ = queue_depth;
    s->polling_us_ = polling_us;
    topics_[topic].subs.push_back(s);
    return s;
  }

  std::shared_ptr<ServiceServer> create_service_server(const std::shared_ptr<Node>& node,
                                                       const std::string& service,
                                                       TypeHandle req, TypeHandle resp,
                                                       u64 polling_us = 10000) {
    if (service.empty()) throw Error("service name must be non-empty");
    std::lock_guard lock(gm_);
    auto& svc = services_[service];
    if (svc.server) throw Error("service already has a server: " + service);
    bind_service_types(svc, service, req, resp);
    auto s = std::make_shared<ServiceServer>();
    s->node_ = node.get();
    s->service_ = service;
    s->req_type_ = req;
    s->resp_type_ = resp;
    s->polling_us_ = polling_us;
    svc.server = s;
    return s;
  }

  std::shared_ptr<ServiceClient> create_service_client(const std::shared_ptr<Node>& node,
                                                       const std::string& service,
                                                       TypeHandle req, TypeHandle resp,
                                                       u64 polling_us = 10000) {
    if (service.empty()) throw Error("service name must be non-empty");
    std::lock_guard lock(gm_);
    auto& svc = services_[service];
    bind_service_types(svc, service, req, resp);
    auto c = std::make_shared<ServiceClient>();
    c->node_ = node.get();
    c->graph_ = this;
    c->service_ = service;
    c->req_type_ = req;
    c->resp_type_ = resp;
    c->polling_us_ = polling_us;
    svc.clients.push_back(c);
    return c;
  }

  std::shared_ptr<ActionServer> create_action_server(const std::shared_ptr<Node>& node,
                                                     const std::string& action, TypeHandle goal,
                                                     TypeHandle feedback, TypeHandle result,
                                                     u64 polling_us = 10000);

  std::shared_ptr<ActionClient> create_action_client(const std::shared_ptr<Node>& node,
                                                     const std::string& action, TypeHandle goal,
                                                     TypeHandle feedback, TypeHandle result,
                                                     u64 polling_us = 10000);

  // ---- pub/sub ----

  void publish(Publisher& pub, const MessageInstance& inst) { publish_corr(pub, inst, 0); }

  void publish_corr(Publisher& pub, const MessageInstance& inst, u64 corr) {
    if (!(inst.type == pub.type_)) throw TypeError("publish: message type mismatch");
    const Bytes bytes = msg::serialize(arena_, reg_, inst);
    deliver_local_publish(pub.topic_, corr, bytes);
    ForwardHooks hooks = hooks_snapshot();
    if (hooks.publish && has_remote_subscriber(pub.topic_)) hooks.publish(pub.topic_, corr, bytes);
  }

  // ---- services ----

  u64 send_request(ServiceClient& client, const MessageInstance& inst) {
    if (!(inst.type == client.req_type_)) throw TypeError("send_request: type mismatch");
    const u64 corr = next_corr();
    const Bytes bytes = msg::serialize(arena_, reg_, inst);
    std::shared_ptr<ServiceServer> server;
    std::string remote_peer;
    {
      std::lock_guard lock(gm_);
      auto it = services_.find(client.service_);
      if (it != services_.end()) server = it->second.server;
      if (!server) {
        auto rit = remote_servers_.find(client.service_);
        if (rit != remote_servers_.end()) remote_peer = rit->second;
      }
      client_by_corr_[corr] = &client;
    }
    if (server) {
      deliver_request(*server, corr, bytes, ServiceServer::Origin{&client, "", false});
    } else if (!remote_peer.empty()) {
      ForwardHooks hooks = hooks_snapshot();
      if (!hooks.request) throw Error("no transport for remote service " + client.service_);
      hooks.request(remote_peer, client.service_, corr, bytes);
    } else {
      throw Error("no server for service " + client.service_);
    }
    return corr;
  }

  void send_response(ServiceServer& server, u64 corr, const MessageInstance& inst) {
    if (!(inst.type == server.resp_type_)) throw TypeError("send_response: type mismatch");
    ServiceServer::Origin origin;
    {
      std::lock_guard lock(server.mu_);
      auto it = server.pending_.find(corr);
      if (it == server.pending_.end())
        throw Error("send_response: unknown correlation id");
      if (it->second.answered) throw Error("send_response: correlation id already answered");
      it->second.answered = true;
      origin = it->second;
    }
    const Bytes bytes = msg::serialize(arena_, reg_, inst);
    if (origin.local) {
      deliver_response_local(*origin.local, server.resp_type_, corr, bytes);
    } else {
      ForwardHooks hooks = hooks_snapshot();
      if (!hooks.response) throw Error("no transport for remote response");
      hooks.response(origin.peer, server.service_, corr, bytes);
    }
  }

  // ---- transport integration ----

  void set_forward_hooks(ForwardHooks hooks) {
    std::lock_guard lock(hooks_mu_);
    hooks_ = std::move(hooks);
  }

  std::vector<EndpointInfo> local_endpoints() const {
    std::lock_guard lock(gm_);
    std::vector<EndpointInfo> out;
    for (const auto& [topic, t] : topics_) {
      for (const auto& p : t.pubs)
        out.push_back({EndpointInfo::Role::Publisher, topic, reg_.fingerprint(p->type_)});
      for (const auto& s : t.subs)
        out.push_back({EndpointInfo::Role::Subscriber, topic, reg_.fingerprint(s->type_)});
    }
    for (const auto& [name, svc] : services_) {
      if (svc.server)
        out.push_back({EndpointInfo::Role::ServiceServer, name,
                       reg_.fingerprint(svc.server->req_type_)});
      for (const auto& c : svc.clients)
        out.push_back({EndpointInfo::Role::ServiceClient, name, reg_.fingerprint(c->req_type_)});
    }
    return out;
  }

  /// Records a remote peer's announced endpoints; mismatching fingerprints
  /// leave the pair unmatched.
  void add_remote_endpoints(const std::string& peer, const std::vector<EndpointInfo>& eps,
                            std::function<void(const std::string&)> warn = {}) {
    std::lock_guard lock(gm_);
    for (const auto& ep : eps) {
      const u64 local_fp = local_fingerprint_for(ep.name);
      if (local_fp != 0 && local_fp != ep.fingerprint) {
        if (warn) warn("type fingerprint mismatch on '" + ep.name + "' with peer " + peer);
        continue;
      }
      switch (ep.role) {
        case EndpointInfo::Role::Subscriber:
          remote_subs_[ep.name].insert(peer);
          break;
        case EndpointInfo::Role::ServiceServer:
          remote_servers_[ep.name] = peer;
          break;
        default:
          break;  // remote publishers/clients push frames at us; nothing to track
      }
    }
  }

  void drop_remote_peer(const std::string& peer) {
    std::lock_guard lock(gm_);
    for (auto& [t, peers] : remote_subs_) peers.erase(peer);
    std::erase_if(remote_servers_, [&](const auto& kv) { return kv.second == peer; });
  }

  void deliver_remote_publish(const std::string& topic, u64 corr, const Bytes& bytes) {
    deliver_local_publish(topic, corr, bytes);
  }

  void deliver_remote_request(const std::string& service, u64 corr, const Bytes& bytes,
                              const std::string& peer) {
    std::shared_ptr<ServiceServer> server;
    {
      std::lock_guard lock(gm_);
      auto it = services_.find(service);
      if (it != services_.end()) server = it->second.server;
    }
    if (!server) return;  // no local server; frame dropped
    deliver_request(*server, corr, bytes, ServiceServer::Origin{nullptr, peer, false});
  }

  void deliver_remote_response(const std::string& service, u64 corr, const Bytes& bytes) {
    ServiceClient* client = nullptr;
    {
      std::lock_guard lock(gm_);
      auto it = client_by_corr_.find(corr);
      if (it == client_by_corr_.end()) return;
      client = it->second;
    }
    deliver_response_local(*client, client->resp_type_, corr, bytes);
  }

  bool has_remote_server(const std::string& service) const {
    std::lock_guard lock(gm_);
    return remote_servers_.count(service) != 0;
  }

  bool topic_has_remote_subscriber(const std::string& topic) const {
    return has_remote_subscriber(topic);
  }

  u32 local_subscriber_count(const std::string& topic) const {
    std::lock_guard lock(gm_);
    auto it = topics_.find(topic);
    return it == topics_.end() ? 0 : static_cast<u32>(it->second.subs.size());
  }

  bool has_server(const std::string& service) const {
    std::lock_guard lock(gm_);
    auto it = services_.find(service);
    return (it != services_.end() && it->second.server) || remote_servers_.count(service) != 0;
  }

  u64 local_type_fingerprint(const std::string& name) const {
    std::lock_guard lock(gm_);
    return local_fingerprint_for(name);
  }

  u64 next_corr() {
    return corr_hi_ | (corr_counter_.fetch_add(1, std::memory_order_relaxed) & 0xffffffffull);
  }

 private:
  friend class Subscriber;
  friend class ServiceClient;
  friend class ActionServer;
  friend class ActionClient;

  struct Topic {
    std::optional<TypeHandle> type;
    std::vector<std::shared_ptr<Publisher>> pubs;
    std::vector<std::shared_ptr<Subscriber>> subs;
  };
  struct Service {
    std::optional<TypeHandle> req_type, resp_type;
    std::shared_ptr<ServiceServer> server;
    std::vector<std::shared_ptr<ServiceClient>> clients;
  };

  void bind_topic_type(const std::string& topic, TypeHandle type) {
    auto& t = topics_[topic];
    if (t.type && !(*t.type == type))
      throw TypeError("type mismatch with existing topic " + topic);
    t.type = type;
  }

  void bind_service_types(Service& svc, const std::string& name, TypeHandle req, TypeHandle resp) {
    if (svc.req_type && (!(*svc.req_type == req) || !(*svc.resp_type == resp)))
      throw TypeError("type mismatch with existing service " + name);
    svc.req_type = req;
    svc.resp_type = resp;
  }

  u64 local_fingerprint_for(const std::string& name) const {
    auto t = topics_.find(name);
    if (t != topics_.end() && t->second.type) return reg_.fingerprint(*t->second.type);
    auto s = services_.find(name);
    if (s != services_.end() && s->second.req_type) return reg_.fingerprint(*s->second.req_type);
    return 0;
  }

  bool has_remote_subscriber(const std::string& topic) const {
    std::lock_guard lock(gm_);
    auto it = remote_subs_.find(topic);
    return it != remote_subs_.end() && !it->second.empty();
  }

  ForwardHooks hooks_snapshot() const {
    std::lock_guard lock(hooks_mu_);
    return hooks_;
  }

  void deliver_local_publish(const std::string& topic, u64 corr, const Bytes& bytes) {
    std::vector<std::shared_ptr<Subscriber>> subs;
    {
      std::lock_guard lock(gm_);
      auto it = topics_.find(topic);
      if (it == topics_.end()) return;
      subs = it->second.subs;
    }
    for (auto& sub : subs) {
      // Each subscriber gets its own arena copy; this is the middleware's
      // "store to main memory" step.
      MessageInstance copy = msg::deserialize(arena_, reg_, sub->type_, bytes, max_msg_);
      tracer_.emit({TraceEvent::Kind::ArenaStore, 0, topic, copy.root, corr});
      std::lock_guard lock(sub->mu_);
      if (sub->q_.size() >= sub->depth_) {
        free_message(arena_, sub->q_.front().inst);
        sub->q_.pop_front();
      }
      sub->q_.push_back(Envelope{corr, std::move(copy)});
      sub->cv_.notify_all();
    }
  }

  void deliver_request(ServiceServer& server, u64 corr, const Bytes& bytes,
                       ServiceServer::Origin origin) {
    MessageInstance copy = msg::deserialize(arena_, reg_, server.req_type_, bytes, max_msg_);
    tracer_.emit({TraceEvent::Kind::ArenaStore, 0, server.service_, copy.root, corr});
    std::lock_guard lock(server.mu_);
    server.pending_[corr] = origin;
    server.q_.push_back(Envelope{corr, std::move(copy)});
    server.cv_.notify_all();
  }

  void deliver_response_local(ServiceClient& client, TypeHandle type, u64 corr,
                              const Bytes& bytes) {
    MessageInstance copy = msg::deserialize(arena_, reg_, type, bytes, max_msg_);
    tracer_.emit({TraceEvent::Kind::ArenaStore, 0, client.service_, copy.root, corr});
    std::lock_guard lock(client.mu_);
    client.responses_[corr] = std::move(copy);
    client.cv_.notify_all();
  }

  mem::Arena& arena_;
  TypeRegistry& reg_;
  u32 max_msg_;
  Tracer tracer_;

  mutable std::mutex gm_;
  std::map<std::string, std::shared_ptr<Node>> nodes_;
  std::map<std::string, Topic> topics_;
  std::map<std::string, Service> services_;
  std::map<u64, ServiceClient*> client_by_corr_;

  std::map<std::string, std::set<std::string>> remote_subs_;  // topic -> peers
  std::map<std::string, std::string> remote_servers_;         // service -> peer

  mutable std::mutex hooks_mu_;
  ForwardHooks hooks_;

  u64 corr_hi_ = 0;
  std::atomic<u64> corr_counter_{1};
};

inline std::optional<MessageInstance> Subscriber::take_matching(u64 corr, Micros timeout) {
  std::unique_lock lock(mu_);
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    for (auto it = q_.begin(); it != q_.end(); ++it) {
      if (it->corr == corr) {
        MessageInstance inst = std::move(it->inst);
        q_.erase(it);
        return inst;
      }
    }
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
      for (auto it = q_.begin(); it != q_.end(); ++it) {
        if (it->corr == corr) {
          MessageInstance inst = std::move(it->inst);
          q_.erase(it);
          return inst;
        }
      }
      return std::nullopt;
    }
  }
}

inline void ServiceClient::discard_response(u64 corr) {
  std::unique_lock lock(mu_);
  auto it = responses_.find(corr);
  if (it == responses_.end()) return;
  MessageInstance inst = std::move(it->second);
  responses_.erase(it);
  lock.unlock();
  msg::free_message(graph_->arena(), inst);
}

}  // namespace hwros::mw
