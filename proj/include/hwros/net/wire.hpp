#pragma once

#include "hwros/core.hpp"
#include "hwros/mw/graph.hpp"

namespace hwros::net {

/// Frame layout on the wire, after the u32 little-endian length prefix:
///   u8 frame-type, u16 name length, name bytes, u64 type fingerprint,
///   u64 correlation id, payload.
enum class FrameType : u8 {
  Announce = 0,
  Publish = 1,
  SrvRequest = 2,
  SrvResponse = 3,
  ActionFeedback = 4,
};

struct WireFrame {
  FrameType type = FrameType::Publish;
  std::string name;
  u64 fingerprint = 0;
  u64 corr = 0;
  Bytes payload;
};

inline Bytes encode_frame(const WireFrame& f) {
  if (f.name.size() > 0xffff) throw Error("frame name too long");
  Bytes body;
  body.push_back(static_cast<u8>(f.type));
  put_u16(body, static_cast<u16>(f.name.size()));
  body.insert(body.end(), f.name.begin(), f.name.end());
  put_u64(body, f.fingerprint);
  put_u64(body, f.corr);
  body.insert(body.end(), f.payload.begin(), f.payload.end());
  Bytes out;
  put_u32(out, static_cast<u32>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

/// Decodes the frame body (without the length prefix).
inline WireFrame decode_frame(const Bytes& body) {
  if (body.size() < 1 + 2 + 8 + 8) throw ProtocolError("frame too short");
  WireFrame f;
  std::size_t pos = 0;
  f.type = static_cast<FrameType>(body[pos++]);
  const u16 nlen = get_u16(body.data() + pos);
  pos += 2;
  if (pos + nlen + 16 > body.size()) throw ProtocolError("frame name truncated");
  f.name.assign(body.begin() + pos, body.begin() + pos + nlen);
  pos += nlen;
  f.fingerprint = get_u64(body.data() + pos);
  pos += 8;
  f.corr = get_u64(body.data() + pos);
  pos += 8;
  f.payload.assign(body.begin() + pos, body.end());
  return f;
}

/// Announce payload: u32 endpoint count, then per endpoint
/// u8 role, u16 name length, name bytes, u64 fingerprint.
inline Bytes encode_announce(const std::vector<mw::EndpointInfo>& eps) {
  Bytes out;
  put_u32(out, static_cast<u32>(eps.size()));
  for (const auto& ep : eps) {
    out.push_back(static_cast<u8>(ep.role));
    put_u16(out, static_cast<u16>(ep.name.size()));
    out.insert(out.end(), ep.name.begin(), ep.name.end());
    put_u64(out, ep.fingerprint);
  }
  return out;
}

inline std::vector<mw::EndpointInfo> decode_announce(const Bytes& payload) {
  if (payload.size() < 4) throw ProtocolError("announce truncated");
  std::vector<mw::EndpointInfo> eps;
  const u32 count = get_u32(payload.data());
  std::size_t pos = 4;
  for (u32 i = 0; i < count; ++i) {
    if (pos + 3 > payload.size()) throw ProtocolError("announce truncated");
    mw::EndpointInfo ep;
    ep.role = static_cast<mw::EndpointInfo::Role>(payload[pos++]);
    const u16 nlen = get_u16(payload.data() + pos);
    pos += 2;
    if (pos + nlen + 8 > payload.size()) throw ProtocolError("announce truncated");
    ep.name.assign(payload.begin() + pos, payload.begin() + pos + nlen);
    pos += nlen;
    ep.fingerprint = get_u64(payload.data() + pos);
    pos += 8;
    eps.push_back(std::move(ep));
  }
  return eps;
}

}  // namespace hwros::net
