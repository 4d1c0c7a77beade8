#pragma once

#include <atomic>
#include <thread>
#include <variant>

#include "hwros/hw/osif.hpp"
#include "hwros/mw/action.hpp"

namespace hwros::hw {

using mw::ActionClient;
using mw::ActionServer;
using mw::Graph;
using mw::Micros;
using mw::Publisher;
using mw::ServiceClient;
using mw::ServiceServer;
using mw::Subscriber;
using msg::MessageInstance;

using EndpointRef =
    std::variant<std::shared_ptr<Publisher>, std::shared_ptr<Subscriber>,
                 std::shared_ptr<ServiceServer>, std::shared_ptr<ServiceClient>,
                 std::shared_ptr<ActionServer>, std::shared_ptr<ActionClient>>;

/// Thrown when the runtime asks a node to wind down.
struct StopRequested {};

/// Thrown on an OSIF protocol violation; halts the offending thread only.
class ThreadFault : public Error {
 public:
  using Error::Error;
};

class StopToken {
 public:
  StopToken() : flag_(std::make_shared<std::atomic<bool>>(false)) {}
  bool requested() const { return flag_->load(std::memory_order_relaxed); }
  void request() { flag_->store(true, std::memory_order_relaxed); }

 private:
  std::shared_ptr<std::atomic<bool>> flag_;
};

/// The node-facing API. A behavior is written once against this interface
/// and runs unchanged under either mapping: the software port executes the
/// calls directly against the middleware, the hardware port turns each call
/// into an OSIF frame served by a delegate. Resources are indices into the
/// node's endpoint table.
class NodeApi {
 public:
  virtual ~NodeApi() = default;

  virtual Addr sub_take(u32 res) = 0;
  virtual void pub_publish(u32 res, Addr msg) = 0;
  virtual std::pair<u64, Addr> srvs_take(u32 res) = 0;
  virtual void srvs_send_response(u32 res, u64 corr, Addr msg) = 0;
  virtual u64 srvc_send_request(u32 res, Addr msg) = 0;
  virtual Addr srvc_take(u32 res, u64 corr) = 0;

  virtual u64 act_send_goal(u32 res, Addr goal) = 0;
  virtual std::pair<u64, Addr> act_take_goal(u32 res) = 0;
  virtual void act_publish_feedback(u32 res, u64 goal, Addr msg) = 0;
  virtual Addr act_take_feedback(u32 res, u64 goal) = 0;
  virtual void act_send_result(u32 res, u64 goal, Addr msg) = 0;
  virtual Addr act_take_result(u32 res, u64 goal) = 0;

  virtual void mem_read(Addr addr, void* out, u32 len) = 0;
  virtual void mem_write(Addr addr, const void* data, u32 len) = 0;

  virtual bool stop_requested() const = 0;
};

using Behavior = std::function<void(NodeApi&)>;

namespace detail {

/// Frees the previously taken message when the next take on the same
/// resource completes; the take buffer is reused, the receiver never frees
/// explicitly.
class TakeCache {
 public:
  explicit TakeCache(mem::Arena& arena) : arena_(arena) {}
  ~TakeCache() { release_all(); }

  Addr hold(u32 res, MessageInstance inst) {
    auto it = held_.find(res);
    if (it != held_.end()) {
      msg::free_message(arena_, it->second);
      held_.erase(it);
    }
    const Addr root = inst.root;
    held_.emplace(res, std::move(inst));
    return root;
  }

  void release_all() {
    for (auto& [res, inst] : held_) msg::free_message(arena_, inst);
    held_.clear();
  }

 private:
  mem::Arena& arena_;
  std::map<u32, MessageInstance> held_;
};

}  // namespace detail

/// Direct-call port for software-mapped nodes.
class SwPort : public NodeApi {
 public:
  SwPort(Graph& graph, std::vector<EndpointRef> endpoints, StopToken stop, u32 thread_id = 0)
      : graph_(graph),
        endpoints_(std::move(endpoints)),
        stop_(stop),
        thread_id_(thread_id),
        cache_(graph.arena()) {}

  Addr sub_take(u32 res) override {
    auto& sub = *get<Subscriber>(res);
    for (;;) {
      if (stop_.requested()) throw StopRequested{};
      if (auto inst = sub.take(Micros(sub.polling_us()))) return cache_.hold(res, std::move(*inst));
    }
  }

  void pub_publish(u32 res, Addr msg) override {
    auto& pub = *get<Publisher>(res);
    graph_.publish(pub, MessageInstance{pub.type(), msg, {}});
  }

  std::pair<u64, Addr> srvs_take(u32 res) override {
    auto& srv = *get<ServiceServer>(res);
    for (;;) {
      if (stop_.requested()) throw StopRequested{};
      if (auto req = srv.take_request(Micros(srv.polling_us())))
        return {req->first, cache_.hold(res, std::move(req->second))};
    }
  }

  void srvs_send_response(u32 res, u64 corr, Addr msg) override {
    auto& srv = *get<ServiceServer>(res);
    graph_.send_response(srv, corr, MessageInstance{srv.response_type(), msg, {}});
  }

  u64 srvc_send_request(u32 res, Addr msg) override {
    auto& cli = *get<ServiceClient>(res);
    return graph_.send_request(cli, MessageInstance{cli.request_type(), msg, {}});
  }

  Addr srvc_take(u32 res, u64 corr) override {
    auto& cli = *get<ServiceClient>(res);
    for (;;) {
      if (stop_.requested()) throw StopRequested{};
      if (auto resp = cli.take_response(corr, Micros(cli.polling_us())))
        return cache_.hold(res, std::move(*resp));
    }
  }

  u64 act_send_goal(u32 res, Addr goal) override {
    auto& act = *get<ActionClient>(res);
    return act.send_goal(MessageInstance{act.goal_type(), goal, {}});
  }

  std::pair<u64, Addr> act_take_goal(u32 res) override {
    auto& act = *get<ActionServer>(res);
    for (;;) {
      if (stop_.requested()) throw StopRequested{};
      if (auto g = act.take_goal(Micros(act.polling_us())))
        return {g->first, cache_.hold(res, std::move(g->second))};
    }
  }

  void act_publish_feedback(u32 res, u64 goal, Addr msg) override {
    auto& act = *get<ActionServer>(res);
    act.publish_feedback(goal, MessageInstance{act.feedback_type(), msg, {}});
  }

  Addr act_take_feedback(u32 res, u64 goal) override {
    auto& act = *get<ActionClient>(res);
    for (;;) {
      if (stop_.requested()) throw StopRequested{};
      if (auto f = act.take_feedback(goal, Micros(10000))) return cache_.hold(res, std::move(*f));
    }
  }

  void act_send_result(u32 res, u64 goal, Addr msg) override {
    auto& act = *get<ActionServer>(res);
    act.send_result(goal, MessageInstance{act.result_type(), msg, {}});
  }

  Addr act_take_result(u32 res, u64 goal) override {
    auto& act = *get<ActionClient>(res);
    for (;;) {
      if (stop_.requested()) throw StopRequested{};
      if (auto r = act.take_result(goal, Micros(10000))) return cache_.hold(res, std::move(*r));
    }
  }

  void mem_read(Addr addr, void* out, u32 len) override {
    graph_.arena().mem_read(addr, out, len);
    if (graph_.tracer().active())
      graph_.tracer().emit({TraceEvent::Kind::MemifRead, thread_id_, "", addr, 0});
  }

  void mem_write(Addr addr, const void* data, u32 len) override {
    graph_.arena().mem_write(addr, data, len);
    if (graph_.tracer().active())
      graph_.tracer().emit({TraceEvent::Kind::MemifWrite, thread_id_, "", addr, 0});
  }

  bool stop_requested() const override { return stop_.requested(); }

 private:
  template <typename T, typename... Alt>
  std::shared_ptr<T> get(u32 res) {
    if (res >= endpoints_.size()) throw Error("unknown resource handle");
    auto* p = std::get_if<std::shared_ptr<T>>(&endpoints_[res]);
    if (!p) throw Error("resource kind mismatch");
    return *p;
  }

  Graph& graph_;
  std::vector<EndpointRef> endpoints_;
  StopToken stop_;
  u32 thread_id_;
  detail::TakeCache cache_;
};

}  // namespace hwros::hw
