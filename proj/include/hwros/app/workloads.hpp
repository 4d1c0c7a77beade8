#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <functional>

#include "hwros/hw/port.hpp"

namespace hwros::app {

// ---------------------------------------------------------------------------
// Pure kernels. These are what the node behaviors below compute; tests check
// them against independent reference implementations.

/// 3x3 Sobel edge filter per channel on interleaved RGB rows.
/// out = clamp(|Gx| + |Gy|, 0, 255); the one-pixel border is 0.
inline void sobel_filter_rgb(const u8* in, u8* out, u32 height, u32 width, u32 step) {
  std::memset(out, 0, static_cast<std::size_t>(height) * step);
  if (height < 3 || width < 3) return;
  static constexpr int kGx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static constexpr int kGy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  for (u32 y = 1; y + 1 < height; ++y) {
    for (u32 x = 1; x + 1 < width; ++x) {
      for (u32 c = 0; c < 3; ++c) {
        int gx = 0, gy = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int v = in[(y + dy) * step + (x + dx) * 3 + c];
            gx += kGx[dy + 1][dx + 1] * v;
            gy += kGy[dy + 1][dx + 1] * v;
          }
        }
        const int mag = std::abs(gx) + std::abs(gy);
        out[y * step + x * 3 + c] = static_cast<u8>(mag > 255 ? 255 : mag);
      }
    }
  }
}

/// Odd-even transposition sort: n stages of alternating compare-exchange
/// passes, the schedule a systolic implementation would use.
inline void odd_even_transposition_sort(std::vector<u32>& a) {
  const std::size_t n = a.size();
  for (std::size_t stage = 0; stage < n; ++stage) {
    for (std::size_t i = stage % 2; i + 1 < n; i += 2) {
      if (a[i] > a[i + 1]) std::swap(a[i], a[i + 1]);
    }
  }
}

namespace detail {

/// atan(2^-i) in degrees, Q16.16; initialized once from std::atan.
inline const std::array<i64, 16>& cordic_atan_table() {
  static const std::array<i64, 16> table = [] {
    std::array<i64, 16> t{};
    for (int i = 0; i < 16; ++i)
      t[i] = std::llround(std::atan(std::ldexp(1.0, -i)) * (180.0 / M_PI) * 65536.0);
    return t;
  }();
  return table;
}

}  // namespace detail

/// arctan of a Q30 ratio in [-1, 1], in degrees Q16.16, computed with a
/// 16-iteration CORDIC vectoring loop (integer arithmetic only).
inline i32 fixed_atan_deg_q16(i64 r_q30) {
  i64 x = i64(1) << 30;
  i64 y = r_q30;
  i64 z = 0;
  const auto& atab = detail::cordic_atan_table();
  for (int i = 0; i < 16; ++i) {
    const i64 x0 = x, y0 = y;
    if (y0 > 0) {
      x = x0 + (y0 >> i);
      y = y0 - (x0 >> i);
      z += atab[i];
    } else {
      x = x0 - (y0 >> i);
      y = y0 + (x0 >> i);
      z -= atab[i];
    }
  }
  return static_cast<i32>(z);
}

constexpr i32 kIkAngleLimitQ86 = 45 * 64;  // +/-45 degrees in Q8.6

/// Inverse-kinematics style transform: the input word packs two joint angles
/// (bits 31..16 and 15..0, signed Q8.6 degrees, each within +/-45 deg). The
/// mixed angle (ax+ay) is normalized against the 90-degree span to a Q30
/// ratio, run through the fixed-point arctan, and the resulting angle maps
/// linearly onto a 10-bit PWM command centered at 512.
inline u32 ik_transform(u32 packed) {
  const i32 ax = static_cast<i16>(packed >> 16);
  const i32 ay = static_cast<i16>(packed & 0xffff);
  if (ax < -kIkAngleLimitQ86 || ax > kIkAngleLimitQ86 || ay < -kIkAngleLimitQ86 ||
      ay > kIkAngleLimitQ86)
    throw Error("ik_transform: joint angle out of range");
  const i64 r_q30 = (i64(ax + ay) << 30) / (2 * kIkAngleLimitQ86);
  const i32 theta_q16 = fixed_atan_deg_q16(r_q30);
  const i64 den = i64(90) << 16;
  const i64 num = i64(theta_q16) * 511;
  const i64 off = num >= 0 ? (num + den / 2) / den : (num - den / 2) / den;
  i64 pwm = 512 + off;
  if (pwm < 0) pwm = 0;
  if (pwm > 1023) pwm = 1023;
  return static_cast<u32>(pwm);
}

// ---------------------------------------------------------------------------
// Node behaviors. A factory runs at setup time with full access to the graph
// (to preallocate output messages and precompute field offsets); the behavior
// it returns touches the system only through the NodeApi, so it runs
// unchanged under either mapping.

struct NodeContext {
  mem::Arena& arena;
  TypeRegistry& reg;
  mw::Graph& graph;
  std::string node_name;
  std::vector<hw::EndpointRef> endpoints;

  template <typename T>
  u32 first() const {
    for (u32 i = 0; i < endpoints.size(); ++i)
      if (std::holds_alternative<std::shared_ptr<T>>(endpoints[i])) return i;
    throw ConfigError("node '" + node_name + "' is missing a required endpoint");
  }

  template <typename T>
  const T& get(u32 res) const {
    return *std::get<std::shared_ptr<T>>(endpoints[res]);
  }
};

using BehaviorFactory = std::function<hw::Behavior(NodeContext&)>;

namespace detail {

inline void chunked_copy(hw::NodeApi& api, Addr src, Addr dst, u32 len) {
  std::vector<u8> buf(64 * 1024);
  u32 off = 0;
  while (off < len) {
    const u32 n = std::min<u32>(static_cast<u32>(buf.size()), len - off);
    api.mem_read(src + off, buf.data(), n);
    api.mem_write(dst + off, buf.data(), n);
    off += n;
  }
}

inline u32 read_u32(hw::NodeApi& api, Addr a) {
  u32 v;
  api.mem_read(a, &v, 4);
  return v;
}

inline void write_u32(hw::NodeApi& api, Addr a, u32 v) { api.mem_write(a, &v, 4); }

/// Shared shape of the take/transform/publish workloads: the output message
/// is preallocated with `out_cap` payload elements behind its `data`
/// sequence, and `fn(api, taken_root)` fills it and returns the output size.
struct SeqOffsets {
  u32 data, size;  // offsets of data pointer and element count words
};

inline SeqOffsets seq_offsets(const TypeRegistry& reg, msg::TypeHandle h,
                              const std::string& field) {
  return {reg.offset_of(h, field + ".data"), reg.offset_of(h, field + ".size")};
}

}  // namespace detail

/// Byte-identical republish: take a blob from the subscription, copy the
/// sequence-counter word and the payload, publish the copy.
inline hw::Behavior make_copy_behavior(NodeContext& ctx) {
  const u32 sub = ctx.first<mw::Subscriber>();
  const u32 pub = ctx.first<mw::Publisher>();
  const auto type = ctx.get<mw::Subscriber>(sub).type();
  const u32 seq_off = ctx.reg.offset_of(type, "seq");
  const auto data = detail::seq_offsets(ctx.reg, type, "data");
  const u32 cap = ctx.graph.max_message_size();
  auto out = msg::alloc_message(ctx.arena, ctx.reg, type, {{"data", cap}});
  const Addr out_root = out.root;
  const Addr out_data = ctx.arena.peek_u32(out_root + data.data);
  return [=](hw::NodeApi& api) {
    for (;;) {
      const Addr in = api.sub_take(sub);
      detail::write_u32(api, out_root + seq_off, detail::read_u32(api, in + seq_off));
      const u32 n = detail::read_u32(api, in + data.size);
      const Addr src = detail::read_u32(api, in + data.data);
      detail::chunked_copy(api, src, out_data, n);
      detail::write_u32(api, out_root + data.size, n);
      api.pub_publish(pub, out_root);
    }
  };
}

constexpr u32 kSortLength = 2048;

/// Take a 2048-element array message, run the odd-even transposition sort,
/// publish the sorted array.
inline hw::Behavior make_sort_behavior(NodeContext& ctx) {
  const u32 sub = ctx.first<mw::Subscriber>();
  const u32 pub = ctx.first<mw::Publisher>();
  const auto type = ctx.get<mw::Subscriber>(sub).type();
  const auto data = detail::seq_offsets(ctx.reg, type, "data");
  auto out = msg::alloc_message(ctx.arena, ctx.reg, type, {{"data", kSortLength}});
  const Addr out_root = out.root;
  const Addr out_data = ctx.arena.peek_u32(out_root + data.data);
  return [=](hw::NodeApi& api) {
    std::vector<u32> words;
    for (;;) {
      const Addr in = api.sub_take(sub);
      const u32 n = detail::read_u32(api, in + data.size);
      if (n != kSortLength) throw Error("sort: expected exactly 2048 elements");
      const Addr src = detail::read_u32(api, in + data.data);
      words.resize(n);
      if (n) api.mem_read(src, words.data(), n * 4);
      odd_even_transposition_sort(words);
      if (n) api.mem_write(out_data, words.data(), n * 4);
      detail::write_u32(api, out_root + data.size, n);
      api.pub_publish(pub, out_root);
    }
  };
}

/// Take a packed joint-angle word, publish the PWM command word.
inline hw::Behavior make_ik_behavior(NodeContext& ctx) {
  const u32 sub = ctx.first<mw::Subscriber>();
  const u32 pub = ctx.first<mw::Publisher>();
  const auto type = ctx.get<mw::Subscriber>(sub).type();
  const u32 value_off = ctx.reg.offset_of(type, "value");
  auto out = msg::alloc_message(ctx.arena, ctx.reg, type);
  const Addr out_root = out.root;
  return [=](hw::NodeApi& api) {
    for (;;) {
      const Addr in = api.sub_take(sub);
      detail::write_u32(api, out_root + value_off, ik_transform(detail::read_u32(api, in + value_off)));
      api.pub_publish(pub, out_root);
    }
  };
}

constexpr u32 kImageWidth = 640;
constexpr u32 kImageHeight = 480;
constexpr u32 kMaxImageBytes = kImageWidth * kImageHeight * 3;

namespace detail {

struct ImageOffsets {
  u32 height, width, step;
  SeqOffsets data;
};

inline ImageOffsets image_offsets(const TypeRegistry& reg, msg::TypeHandle h,
                                  const std::string& prefix) {
  auto p = [&](const char* f) { return prefix.empty() ? std::string(f) : prefix + "." + f; };
  return {reg.offset_of(h, p("height")), reg.offset_of(h, p("width")), reg.offset_of(h, p("step")),
          seq_offsets(reg, h, p("data"))};
}

/// Reads the image at `in_root`, filters it, writes the result image at
/// `out_root` (payload behind `out_data`, capacity kMaxImageBytes).
inline void filter_image(hw::NodeApi& api, Addr in_root, const ImageOffsets& in_off,
                         Addr out_root, const ImageOffsets& out_off, Addr out_data,
                         std::vector<u8>& in_buf, std::vector<u8>& out_buf) {
  const u32 h = read_u32(api, in_root + in_off.height);
  const u32 w = read_u32(api, in_root + in_off.width);
  const u32 step = read_u32(api, in_root + in_off.step);
  const u32 n = read_u32(api, in_root + in_off.data.size);
  if (w != kImageWidth || h != kImageHeight || step != w * 3 || u64(h) * step != n)
    throw Error("sobel: expected a 640x480 interleaved RGB image");
  const Addr src = read_u32(api, in_root + in_off.data.data);
  in_buf.resize(n);
  out_buf.resize(n);
  if (n) api.mem_read(src, in_buf.data(), n);
  sobel_filter_rgb(in_buf.data(), out_buf.data(), h, w, step);
  write_u32(api, out_root + out_off.height, h);
  write_u32(api, out_root + out_off.width, w);
  write_u32(api, out_root + out_off.step, step);
  if (n) api.mem_write(out_data, out_buf.data(), n);
  write_u32(api, out_root + out_off.data.size, n);
}

}  // namespace detail

/// Take an image, publish the edge-filtered image.
inline hw::Behavior make_sobel_behavior(NodeContext& ctx) {
  const u32 sub = ctx.first<mw::Subscriber>();
  const u32 pub = ctx.first<mw::Publisher>();
  const auto type = ctx.get<mw::Subscriber>(sub).type();
  const auto off = detail::image_offsets(ctx.reg, type, "");
  auto out = msg::alloc_message(ctx.arena, ctx.reg, type, {{"data", kMaxImageBytes}});
  const Addr out_root = out.root;
  const Addr out_data = ctx.arena.peek_u32(out_root + off.data.data);
  return [=](hw::NodeApi& api) {
    std::vector<u8> in_buf, out_buf;
    for (;;) {
      const Addr in = api.sub_take(sub);
      detail::filter_image(api, in, off, out_root, off, out_data, in_buf, out_buf);
      api.pub_publish(pub, out_root);
    }
  };
}

/// Serve edge filtering as a request/response service; request and response
/// both carry one image under the `img` field.
inline hw::Behavior make_sobel_service_behavior(NodeContext& ctx) {
  const u32 srv = ctx.first<mw::ServiceServer>();
  const auto& server = ctx.get<mw::ServiceServer>(srv);
  const auto in_off = detail::image_offsets(ctx.reg, server.request_type(), "img");
  const auto out_off = detail::image_offsets(ctx.reg, server.response_type(), "img");
  auto out = msg::alloc_message(ctx.arena, ctx.reg, server.response_type(),
                                {{"img.data", kMaxImageBytes}});
  const Addr out_root = out.root;
  const Addr out_data = ctx.arena.peek_u32(out_root + out_off.data.data);
  return [=](hw::NodeApi& api) {
    std::vector<u8> in_buf, out_buf;
    for (;;) {
      const auto [corr, req] = api.srvs_take(srv);
      detail::filter_image(api, req, in_off, out_root, out_off, out_data, in_buf, out_buf);
      api.srvs_send_response(srv, corr, out_root);
    }
  };
}

/// Image pipeline client: take a raw image, send it to the filter service,
/// publish the filtered image it gets back.
inline hw::Behavior make_dip_behavior(NodeContext& ctx) {
  const u32 sub = ctx.first<mw::Subscriber>();
  const u32 pub = ctx.first<mw::Publisher>();
  const u32 cli = ctx.first<mw::ServiceClient>();
  const auto& client = ctx.get<mw::ServiceClient>(cli);
  const auto img_type = ctx.get<mw::Subscriber>(sub).type();
  const auto img_off = detail::image_offsets(ctx.reg, img_type, "");
  const auto req_off = detail::image_offsets(ctx.reg, client.request_type(), "img");
  const auto resp_off = detail::image_offsets(ctx.reg, client.response_type(), "img");
  auto req = msg::alloc_message(ctx.arena, ctx.reg, client.request_type(),
                                {{"img.data", kMaxImageBytes}});
  auto out = msg::alloc_message(ctx.arena, ctx.reg, img_type, {{"data", kMaxImageBytes}});
  const Addr req_root = req.root, out_root = out.root;
  const Addr req_data = ctx.arena.peek_u32(req_root + req_off.data.data);
  const Addr out_data = ctx.arena.peek_u32(out_root + img_off.data.data);
  auto copy_image = [](hw::NodeApi& api, Addr src_root, const detail::ImageOffsets& so,
                       Addr dst_root, const detail::ImageOffsets& d, Addr dst_data) {
    const u32 n = detail::read_u32(api, src_root + so.data.size);
    if (n > kMaxImageBytes) throw Error("dip: image too large");
    detail::write_u32(api, dst_root + d.height, detail::read_u32(api, src_root + so.height));
    detail::write_u32(api, dst_root + d.width, detail::read_u32(api, src_root + so.width));
    detail::write_u32(api, dst_root + d.step, detail::read_u32(api, src_root + so.step));
    detail::chunked_copy(api, detail::read_u32(api, src_root + so.data.data), dst_data, n);
    detail::write_u32(api, dst_root + d.data.size, n);
  };
  return [=](hw::NodeApi& api) {
    for (;;) {
      const Addr in = api.sub_take(sub);
      copy_image(api, in, img_off, req_root, req_off, req_data);
      const u64 corr = api.srvc_send_request(cli, req_root);
      const Addr resp = api.srvc_take(cli, corr);
      copy_image(api, resp, resp_off, out_root, img_off, out_data);
      api.pub_publish(pub, out_root);
    }
  };
}

class WorkloadRegistry {
 public:
  WorkloadRegistry() {
    add("copy", make_copy_behavior);
    add("sort", make_sort_behavior);
    add("inverse_kinematics", make_ik_behavior);
    add("sobel", make_sobel_behavior);
    add("sobel_service", make_sobel_service_behavior);
    add("dip", make_dip_behavior);
  }

  void add(const std::string& name, BehaviorFactory f) { factories_[name] = std::move(f); }

  const BehaviorFactory& find(const std::string& name) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) throw ConfigError("unknown behavior '" + name + "'");
    return it->second;
  }

  static const WorkloadRegistry& builtin() {
    static const WorkloadRegistry r;
    return r;
  }

 private:
  std::map<std::string, BehaviorFactory> factories_;
};

}  // namespace hwros::app
