#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

#include "hwros/net/wire.hpp"

namespace hwros::net {

struct PeerConfig {
  std::string bind_host = "127.0.0.1";
  u16 bind_port = 0;  // 0 = ephemeral
  std::vector<std::string> peers;  // "host:port"
};

/// Connects process-local graphs into one system over TCP: static peer
/// list, endpoint announcement on connect, topic forwarding and service
/// frame routing. One connection per peer pair carries all frames in order,
/// which preserves per-publisher FIFO end to end. Reliability is
/// per-connection: a dead link drops its in-flight frames and raises a
/// link-down event.
class Transport {
 public:
  Transport(PeerConfig cfg, mw::Graph& graph) : cfg_(std::move(cfg)), graph_(graph) {
    for (const auto& p : cfg_.peers) {
      for (const auto& q : cfg_.peers)
        if (&p != &q && p == q) throw ConfigError("duplicate peer " + p);
    }
  }

  ~Transport() { stop(); }

  void set_link_down_handler(std::function<void(const std::string&)> fn) {
    std::lock_guard lock(mu_);
    on_link_down_ = std::move(fn);
  }

  void set_warn_handler(std::function<void(const std::string&)> fn) {
    std::lock_guard lock(mu_);
    warn_ = std::move(fn);
  }

  void start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error("transport: socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(cfg_.bind_port);
    if (::inet_pton(AF_INET, cfg_.bind_host.c_str(), &addr.sin_addr) != 1)
      throw ConfigError("transport: bad bind host " + cfg_.bind_host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw Error("transport: bind failed on " + cfg_.bind_host + ":" +
                  std::to_string(cfg_.bind_port));
    }
    if (::listen(listen_fd_, 16) != 0) throw Error("transport: listen failed");
    sockaddr_in got{};
    socklen_t len = sizeof(got);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&got), &len);
    port_ = ntohs(got.sin_port);
    local_id_ = cfg_.bind_host + ":" + std::to_string(port_);
    no_self_check();

    install_hooks();
    accept_thread_ = std::thread([this] { accept_loop(); });
    for (const auto& p : cfg_.peers)
      dial_threads_.emplace_back([this, p] { dial_loop(p); });
  }

  void stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true)) return;
    if (listen_fd_ >= 0) {
      ::shutdown(listen_fd_, SHUT_RDWR);
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
    {
      std::lock_guard lock(mu_);
      for (auto& [key, link] : links_) close_fd(link->fd);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : dial_threads_)
      if (t.joinable()) t.join();
    dial_threads_.clear();
    std::vector<std::thread> readers;
    {
      std::lock_guard lock(mu_);
      readers.swap(reader_threads_);
    }
    for (auto& t : readers)
      if (t.joinable()) t.join();
  }

  u16 port() const { return port_; }
  const std::string& local_id() const { return local_id_; }

  /// Re-sends the announce frame on every live link; call after adding
  /// endpoints to a graph that is already connected.
  void reannounce() {
    std::vector<LinkPtr> targets;
    {
      std::lock_guard lock(mu_);
      for (const auto& [key, link] : links_) targets.push_back(link);
    }
    const WireFrame hello{FrameType::Announce, local_id_, 0, 0,
                          encode_announce(graph_.local_endpoints())};
    const Bytes enc = encode_frame(hello);
    for (const auto& link : targets) send_encoded(*link, enc);
  }

  std::vector<std::string> connected_peers() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [key, link] : links_)
      if (link->announced) out.push_back(key);
    return out;
  }

 private:
  struct Link {
    int fd = -1;
    std::string key;  // peer "host:port" identity, set on announce
    bool announced = false;
    std::mutex write_mu;
    std::map<std::string, u64> sub_topics;  // topic -> fingerprint the peer subscribed with
  };
  using LinkPtr = std::shared_ptr<Link>;

  void no_self_check() const {
    for (const auto& p : cfg_.peers)
      if (p == local_id_) throw ConfigError("peer list contains self: " + p);
  }

  void install_hooks() {
    mw::ForwardHooks hooks;
    hooks.publish = [this](const std::string& topic, u64 corr, const Bytes& bytes) {
      forward_publish(topic, corr, bytes);
    };
    hooks.request = [this](const std::string& peer, const std::string& service, u64 corr,
                           const Bytes& bytes) {
      send_to_peer(peer, WireFrame{FrameType::SrvRequest, service,
                                   graph_.local_type_fingerprint(service), corr, bytes});
    };
    hooks.response = [this](const std::string& peer, const std::string& service, u64 corr,
                            const Bytes& bytes) {
      send_to_peer(peer, WireFrame{FrameType::SrvResponse, service,
                                   graph_.local_type_fingerprint(service), corr, bytes});
    };
    graph_.set_forward_hooks(std::move(hooks));
  }

  void forward_publish(const std::string& topic, u64 corr, const Bytes& bytes) {
    std::vector<LinkPtr> targets;
    {
      std::lock_guard lock(mu_);
      for (const auto& [key, link] : links_)
        if (link->announced && link->sub_topics.count(topic)) targets.push_back(link);
    }
    const FrameType ft = corr == 0 ? FrameType::Publish : FrameType::ActionFeedback;
    const WireFrame f{ft, topic, graph_.local_type_fingerprint(topic), corr, bytes};
    const Bytes enc = encode_frame(f);
    for (const auto& link : targets) send_encoded(*link, enc);
  }

  void send_to_peer(const std::string& peer, const WireFrame& f) {
    LinkPtr link;
    {
      std::lock_guard lock(mu_);
      auto it = links_.find(peer);
      if (it == links_.end()) return;  // link down; frame dropped
      link = it->second;
    }
    send_encoded(*link, encode_frame(f));
  }

  void send_encoded(Link& link, const Bytes& enc) {
    std::lock_guard lock(link.write_mu);
    std::size_t off = 0;
    while (off < enc.size()) {
      const ssize_t n = ::send(link.fd, enc.data() + off, enc.size() - off, MSG_NOSIGNAL);
      if (n <= 0) return;  // reader notices the dead link
      off += static_cast<std::size_t>(n);
    }
  }

  void accept_loop() {
    for (;;) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      adopt_connection(fd);
    }
  }

  void dial_loop(const std::string& peer) {
    const auto colon = peer.rfind(':');
    if (colon == std::string::npos) {
      warn("bad peer address: " + peer);
      return;
    }
    const std::string host = peer.substr(0, colon);
    const u16 port = static_cast<u16>(std::stoi(peer.substr(colon + 1)));
    while (!stopping_.load()) {
      {
        std::lock_guard lock(mu_);
        if (links_.count(peer)) return;  // already connected (peer dialed us)
      }
      const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_port = htons(port);
      if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        warn("bad peer host: " + host);
        return;
      }
      if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
        adopt_connection(fd);
        return;
      }
      ::close(fd);
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }

  void adopt_connection(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto link = std::make_shared<Link>();
    link->fd = fd;
    // Announce ourselves first; the peer learns our identity and endpoints.
    const WireFrame hello{FrameType::Announce, local_id_, 0, 0,
                          encode_announce(graph_.local_endpoints())};
    send_encoded(*link, encode_frame(hello));
    std::lock_guard lock(mu_);
    reader_threads_.emplace_back([this, link] { reader_loop(link); });
  }

  void reader_loop(LinkPtr link) {
    for (;;) {
      u8 lenbuf[4];
      if (!read_exact(link->fd, lenbuf, 4)) break;
      const u32 len = get_u32(lenbuf);
      if (len < 19 || len > graph_.max_message_size() + 1024) break;
      Bytes body(len);
      if (!read_exact(link->fd, body.data(), len)) break;
      try {
        handle_frame(link, decode_frame(body));
      } catch (const std::exception& e) {
        warn(std::string("frame error: ") + e.what());
      }
    }
    link_down(link);
  }

  void handle_frame(const LinkPtr& link, WireFrame f) {
    switch (f.type) {
      case FrameType::Announce: {
        auto eps = decode_announce(f.payload);
        {
          std::lock_guard lock(mu_);
          link->key = f.name;
          link->announced = true;
          for (const auto& ep : eps)
            if (ep.role == mw::EndpointInfo::Role::Subscriber)
              link->sub_topics[ep.name] = ep.fingerprint;
          links_[f.name] = link;
        }
        graph_.add_remote_endpoints(f.name, eps, [this](const std::string& m) { warn(m); });
        break;
      }
      case FrameType::Publish:
      case FrameType::ActionFeedback: {
        const u64 local_fp = graph_.local_type_fingerprint(f.name);
        if (local_fp != 0 && local_fp != f.fingerprint) {
          warn("dropping publish with mismatched fingerprint on " + f.name);
          break;
        }
        graph_.deliver_remote_publish(f.name, f.corr, f.payload);
        break;
      }
      case FrameType::SrvRequest:
        graph_.deliver_remote_request(f.name, f.corr, f.payload, link->key);
        break;
      case FrameType::SrvResponse:
        graph_.deliver_remote_response(f.name, f.corr, f.payload);
        break;
    }
  }

  void link_down(const LinkPtr& link) {
    close_fd(link->fd);
    std::string key;
    std::function<void(const std::string&)> handler;
    {
      std::lock_guard lock(mu_);
      key = link->key;
      if (!key.empty()) links_.erase(key);
      handler = on_link_down_;
    }
    if (!key.empty()) {
      graph_.drop_remote_peer(key);
      if (handler && !stopping_.load()) handler(key);
    }
  }

  static bool read_exact(int fd, void* buf, std::size_t n) {
    u8* p = static_cast<u8*>(buf);
    std::size_t got = 0;
    while (got < n) {
      const ssize_t r = ::recv(fd, p + got, n - got, 0);
      if (r <= 0) return false;
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

  static void close_fd(int fd) {
    if (fd >= 0) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
  }

  void warn(const std::string& m) {
    std::function<void(const std::string&)> w;
    {
      std::lock_guard lock(mu_);
      w = warn_;
    }
    if (w) w(m);
  }

  PeerConfig cfg_;
  mw::Graph& graph_;
  int listen_fd_ = -1;
  u16 port_ = 0;
  std::string local_id_;
  std::atomic<bool> stopping_{false};

  mutable std::mutex mu_;
  std::map<std::string, LinkPtr> links_;
  std::vector<std::thread> reader_threads_;
  std::vector<std::thread> dial_threads_;
  std::thread accept_thread_;
  std::function<void(const std::string&)> on_link_down_;
  std::function<void(const std::string&)> warn_;
};

}  // namespace hwros::net
