#pragma once

#include "hwros/hw/port.hpp"

namespace hwros::hw {

/// OSIF-backed port for hardware-mapped nodes. Every middleware call is a
/// command frame to the delegate; the OSFSM rule applies: at most one
/// outstanding command, a second one faults the thread.
class HwPort : public NodeApi {
 public:
  HwPort(Graph& graph, StopToken stop, u32 thread_id, std::vector<std::string> res_names)
      : graph_(graph), stop_(stop), thread_id_(thread_id), res_names_(std::move(res_names)) {}

  WordFifo& tx() { return tx_; }
  WordFifo& rx() { return rx_; }
  bool faulted() const { return faulted_.load(); }

  Addr sub_take(u32 res) override {
    auto r = call(OsifOp::SubTake, res, {});
    trace_response(res, r[0]);
    return r[0];
  }

  void pub_publish(u32 res, Addr msg) override { call(OsifOp::Publish, res, {msg}); }

  std::pair<u64, Addr> srvs_take(u32 res) override {
    auto r = call(OsifOp::SrvsTake, res, {});
    trace_response(res, r[2]);
    return {join64(r[0], r[1]), r[2]};
  }

  void srvs_send_response(u32 res, u64 corr, Addr msg) override {
    call(OsifOp::SrvsSendResponse, res, {lo(corr), hi(corr), msg});
  }

  u64 srvc_send_request(u32 res, Addr msg) override {
    auto r = call(OsifOp::SrvcSendRequest, res, {msg});
    return join64(r[0], r[1]);
  }

  Addr srvc_take(u32 res, u64 corr) override {
    auto r = call(OsifOp::SrvcTake, res, {lo(corr), hi(corr)});
    trace_response(res, r[0]);
    return r[0];
  }

  u64 act_send_goal(u32 res, Addr goal) override {
    auto r = call(OsifOp::ActSendGoal, res, {goal});
    return join64(r[0], r[1]);
  }

  std::pair<u64, Addr> act_take_goal(u32 res) override {
    auto r = call(OsifOp::ActTakeGoal, res, {});
    trace_response(res, r[2]);
    return {join64(r[0], r[1]), r[2]};
  }

  void act_publish_feedback(u32 res, u64 goal, Addr msg) override {
    call(OsifOp::ActPublishFeedback, res, {lo(goal), hi(goal), msg});
  }

  Addr act_take_feedback(u32 res, u64 goal) override {
    auto r = call(OsifOp::ActTakeFeedback, res, {lo(goal), hi(goal)});
    trace_response(res, r[0]);
    return r[0];
  }

  void act_send_result(u32 res, u64 goal, Addr msg) override {
    call(OsifOp::ActSendResult, res, {lo(goal), hi(goal), msg});
  }

  Addr act_take_result(u32 res, u64 goal) override {
    auto r = call(OsifOp::ActTakeResult, res, {lo(goal), hi(goal)});
    trace_response(res, r[0]);
    return r[0];
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

  /// Test hook: issue a command without collecting the response, modeling a
  /// broken OSFSM. The next regular call then violates the
  /// one-outstanding-command rule and faults.
  void send_command_nowait(OsifOp op, u32 res, std::initializer_list<u32> args) {
    outstanding_.store(true);
    tx_.push(static_cast<u32>(op));
    tx_.push(res);
    for (u32 a : args) tx_.push(a);
  }

 private:
  static u32 lo(u64 v) { return static_cast<u32>(v); }
  static u32 hi(u64 v) { return static_cast<u32>(v >> 32); }
  static u64 join64(u32 lo, u32 hi) { return static_cast<u64>(lo) | (static_cast<u64>(hi) << 32); }

  const std::string& res_name(u32 res) const {
    static const std::string empty;
    return res < res_names_.size() ? res_names_[res] : empty;
  }

  void trace_response(u32 res, Addr addr) {
    if (graph_.tracer().active())
      graph_.tracer().emit({TraceEvent::Kind::AddressResponse, thread_id_, res_name(res), addr, 0});
  }

  [[noreturn]] void fault(const std::string& why) {
    faulted_.store(true);
    throw ThreadFault("thread " + std::to_string(thread_id_) + ": " + why);
  }

  std::vector<u32> call(OsifOp op, u32 res, std::initializer_list<u32> args) {
    if (stop_.requested()) throw StopRequested{};
    if (faulted_.load()) fault("thread already halted");
    if (outstanding_.exchange(true)) fault("second OSIF command while one is outstanding");
    if (graph_.tracer().active())
      graph_.tracer().emit({TraceEvent::Kind::CommandSent, thread_id_, res_name(res),
                            args.size() ? *args.begin() : 0, 0});
    if (!tx_.push(static_cast<u32>(op)) || !tx_.push(res)) throw StopRequested{};
    for (u32 a : args)
      if (!tx_.push(a)) throw StopRequested{};
    auto status = rx_.pop();
    if (!status) throw StopRequested{};
    const auto shape = frame_shape(static_cast<u32>(op));
    std::vector<u32> out(shape->results, 0);
    for (u32& w : out) {
      auto v = rx_.pop();
      if (!v) throw StopRequested{};
      w = v.value();
    }
    outstanding_.store(false);
    switch (*status) {
      case kOk: return out;
      case kStopped: throw StopRequested{};
      case kProtocolError: fault("protocol error reported by delegate");
      case kTypeMismatch: throw TypeError("type mismatch (status)");
      default: throw Error("middleware error status " + std::to_string(*status));
    }
  }

  Graph& graph_;
  StopToken stop_;
  u32 thread_id_;
  std::vector<std::string> res_names_;
  WordFifo tx_, rx_;
  std::atomic<bool> outstanding_{false};
  std::atomic<bool> faulted_{false};
};

/// CPU-side proxy that serves one hardware thread's OSIF commands by
/// executing the middleware calls on its behalf. It never touches message
/// payload bytes; only the hardware thread reads or writes those.
class Delegate {
 public:
  Delegate(Graph& graph, StopToken stop, u32 thread_id, std::vector<EndpointRef> endpoints,
           HwPort& port)
      : graph_(graph),
        stop_(stop),
        thread_id_(thread_id),
        endpoints_(std::move(endpoints)),
        port_(port),
        cache_(graph.arena()) {}

  void run() {
    for (;;) {
      auto op = port_.tx().pop();
      if (!op) break;
      const auto shape = frame_shape(*op);
      if (!shape) {
        // Unknown opcode: no way to know the frame length, report and carry on.
        if (!port_.rx().push(kProtocolError)) break;
        continue;
      }
      auto res = port_.tx().pop();
      if (!res) break;
      std::vector<u32> args(shape->args, 0);
      bool closed = false;
      for (u32& a : args) {
        auto v = port_.tx().pop();
        if (!v) {
          closed = true;
          break;
        }
        a = v.value();
      }
      if (closed) break;
      if (graph_.tracer().active())
        graph_.tracer().emit({TraceEvent::Kind::DelegateDispatch, thread_id_, "", 0, 0});
      std::vector<u32> out(shape->results, 0);
      u32 status;
      try {
        status = dispatch(static_cast<OsifOp>(*op), *res, args, out);
      } catch (const TypeError&) {
        status = kTypeMismatch;
      } catch (const std::exception&) {
        status = kMiddlewareError;
      }
      if (!port_.rx().push(status)) break;
      for (u32 w : out)
        if (!port_.rx().push(w)) break;
      if (port_.rx().closed()) break;
    }
    cache_.release_all();
  }

 private:
  template <typename T>
  std::shared_ptr<T> get(u32 res) {
    if (res >= endpoints_.size()) throw Error("unknown resource handle");
    auto* p = std::get_if<std::shared_ptr<T>>(&endpoints_[res]);
    if (!p) throw Error("resource kind mismatch");
    return *p;
  }

  void trace_unblock(const std::string& name, Addr addr) {
    if (graph_.tracer().active())
      graph_.tracer().emit({TraceEvent::Kind::DelegateUnblock, thread_id_, name, addr, 0});
  }

  u32 dispatch(OsifOp op, u32 res, const std::vector<u32>& args, std::vector<u32>& out) {
    switch (op) {
      case OsifOp::SubTake: {
        auto sub = get<Subscriber>(res);
        for (;;) {
          if (stop_.requested()) return kStopped;
          if (auto inst = sub->take(Micros(sub->polling_us()))) {
            trace_unblock(sub->topic(), inst->root);
            out[0] = cache_.hold(res, std::move(*inst));
            return kOk;
          }
        }
      }
      case OsifOp::Publish: {
        auto pub = get<Publisher>(res);
        graph_.publish(*pub, MessageInstance{pub->type(), args[0], {}});
        return kOk;
      }
      case OsifOp::SrvsTake: {
        auto srv = get<ServiceServer>(res);
        for (;;) {
          if (stop_.requested()) return kStopped;
          if (auto req = srv->take_request(Micros(srv->polling_us()))) {
            trace_unblock(srv->service(), req->second.root);
            out[0] = static_cast<u32>(req->first);
            out[1] = static_cast<u32>(req->first >> 32);
            out[2] = cache_.hold(res, std::move(req->second));
            return kOk;
          }
        }
      }
      case OsifOp::SrvsSendResponse: {
        auto srv = get<ServiceServer>(res);
        graph_.send_response(*srv, join64(args[0], args[1]),
                             MessageInstance{srv->response_type(), args[2], {}});
        return kOk;
      }
      case OsifOp::SrvcSendRequest: {
        auto cli = get<ServiceClient>(res);
        const u64 corr =
            graph_.send_request(*cli, MessageInstance{cli->request_type(), args[0], {}});
        out[0] = static_cast<u32>(corr);
        out[1] = static_cast<u32>(corr >> 32);
        return kOk;
      }
      case OsifOp::SrvcTake: {
        auto cli = get<ServiceClient>(res);
        const u64 corr = join64(args[0], args[1]);
        for (;;) {
          if (stop_.requested()) return kStopped;
          if (auto resp = cli->take_response(corr, Micros(cli->polling_us()))) {
            trace_unblock(cli->service(), resp->root);
            out[0] = cache_.hold(res, std::move(*resp));
            return kOk;
          }
        }
      }
      case OsifOp::ActSendGoal: {
        auto act = get<ActionClient>(res);
        const u64 g = act->send_goal(MessageInstance{act->goal_type(), args[0], {}});
        out[0] = static_cast<u32>(g);
        out[1] = static_cast<u32>(g >> 32);
        return kOk;
      }
      case OsifOp::ActTakeGoal: {
        auto act = get<ActionServer>(res);
        for (;;) {
          if (stop_.requested()) return kStopped;
          if (auto g = act->take_goal(Micros(act->polling_us()))) {
            trace_unblock(act->action(), g->second.root);
            out[0] = static_cast<u32>(g->first);
            out[1] = static_cast<u32>(g->first >> 32);
            out[2] = cache_.hold(res, std::move(g->second));
            return kOk;
          }
        }
      }
      case OsifOp::ActPublishFeedback: {
        auto act = get<ActionServer>(res);
        act->publish_feedback(join64(args[0], args[1]),
                              MessageInstance{act->feedback_type(), args[2], {}});
        return kOk;
      }
      case OsifOp::ActTakeFeedback: {
        auto act = get<ActionClient>(res);
        const u64 g = join64(args[0], args[1]);
        for (;;) {
          if (stop_.requested()) return kStopped;
          if (auto f = act->take_feedback(g, Micros(10000))) {
            trace_unblock(act->action(), f->root);
            out[0] = cache_.hold(res, std::move(*f));
            return kOk;
          }
        }
      }
      case OsifOp::ActSendResult: {
        auto act = get<ActionServer>(res);
        act->send_result(join64(args[0], args[1]),
                         MessageInstance{act->result_type(), args[2], {}});
        return kOk;
      }
      case OsifOp::ActTakeResult: {
        auto act = get<ActionClient>(res);
        const u64 g = join64(args[0], args[1]);
        for (;;) {
          if (stop_.requested()) return kStopped;
          if (auto r = act->take_result(g, Micros(10000))) {
            trace_unblock(act->action(), r->root);
            out[0] = cache_.hold(res, std::move(*r));
            return kOk;
          }
        }
      }
    }
    return kProtocolError;
  }

  static u64 join64(u32 lo, u32 hi) { return static_cast<u64>(lo) | (static_cast<u64>(hi) << 32); }

  Graph& graph_;
  StopToken stop_;
  u32 thread_id_;
  std::vector<EndpointRef> endpoints_;
  HwPort& port_;
  detail::TakeCache cache_;
};

inline std::string endpoint_name(const EndpointRef& ep) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(*p)>;
        if constexpr (std::is_same_v<T, Publisher> || std::is_same_v<T, Subscriber>)
          return p->topic();
        else if constexpr (std::is_same_v<T, ServiceServer> || std::is_same_v<T, ServiceClient>)
          return p->service();
        else
          return p->action();
      },
      ep);
}

/// Hosts node execution contexts. Hardware-mapped nodes get a slot, an OSIF
/// pair, and a delegate thread; software-mapped nodes run the same behavior
/// with direct middleware calls.
class Runtime {
 public:
  Runtime(Graph& graph, u32 slot_count) : graph_(graph), slots_(slot_count) {}

  ~Runtime() { stop_all(); }

  u32 start_hardware_thread(u32 slot, const std::string& name,
                            std::vector<EndpointRef> endpoints, Behavior behavior) {
    std::lock_guard lock(mu_);
    if (slot >= slots_.size()) throw Error("slot index out of range");
    if (slots_[slot]) throw Error("slot " + std::to_string(slot) + " already occupied");
    auto rec = std::make_unique<ThreadRec>();
    rec->id = next_id_++;
    rec->name = name;
    rec->mapping = mw::Mapping::Hardware;
    rec->slot = slot;
    std::vector<std::string> names;
    for (const auto& ep : endpoints) names.push_back(endpoint_name(ep));
    rec->hw_port = std::make_unique<HwPort>(graph_, rec->stop, rec->id, std::move(names));
    rec->delegate =
        std::make_unique<Delegate>(graph_, rec->stop, rec->id, endpoints, *rec->hw_port);
    slots_[slot] = rec->id;
    ThreadRec* r = rec.get();
    r->delegate_thread = std::thread([r] { r->delegate->run(); });
    r->behavior_thread = std::thread([r, behavior = std::move(behavior)] {
      run_behavior(*r, behavior, *r->hw_port);
    });
    threads_.push_back(std::move(rec));
    return r->id;
  }

  u32 run_software_node(const std::string& name, std::vector<EndpointRef> endpoints,
                        Behavior behavior) {
    std::lock_guard lock(mu_);
    auto rec = std::make_unique<ThreadRec>();
    rec->id = next_id_++;
    rec->name = name;
    rec->mapping = mw::Mapping::Software;
    rec->sw_port = std::make_unique<SwPort>(graph_, std::move(endpoints), rec->stop, rec->id);
    ThreadRec* r = rec.get();
    r->behavior_thread = std::thread([r, behavior = std::move(behavior)] {
      run_behavior(*r, behavior, *r->sw_port);
    });
    threads_.push_back(std::move(rec));
    return r->id;
  }

  HwPort* hw_port(u32 id) {
    std::lock_guard lock(mu_);
    for (auto& r : threads_)
      if (r->id == id) return r->hw_port.get();
    return nullptr;
  }

  bool faulted(u32 id) const { return find(id).faulted.load(); }
  bool finished(u32 id) const { return find(id).done.load(); }
  std::string error_of(u32 id) const {
    std::lock_guard lock(find(id).err_mu);
    return find(id).error;
  }

  bool any_fault() const {
    std::lock_guard lock(mu_);
    for (const auto& r : threads_)
      if (r->faulted.load()) return true;
    return false;
  }

  void stop_all() {
    std::lock_guard lock(mu_);
    for (auto& r : threads_) {
      r->stop.request();
      if (r->hw_port) {
        r->hw_port->tx().close();
        r->hw_port->rx().close();
      }
    }
    for (auto& r : threads_) {
      if (r->behavior_thread.joinable()) r->behavior_thread.join();
      if (r->delegate_thread.joinable()) r->delegate_thread.join();
    }
  }

 private:
  struct ThreadRec {
    u32 id = 0;
    std::string name;
    mw::Mapping mapping = mw::Mapping::Software;
    std::optional<u32> slot;
    StopToken stop;
    std::unique_ptr<HwPort> hw_port;
    std::unique_ptr<SwPort> sw_port;
    std::unique_ptr<Delegate> delegate;
    std::thread behavior_thread, delegate_thread;
    std::atomic<bool> faulted{false};
    std::atomic<bool> done{false};
    mutable std::mutex err_mu;
    std::string error;
  };

  static void run_behavior(ThreadRec& r, const Behavior& behavior, NodeApi& api) {
    try {
      behavior(api);
    } catch (const StopRequested&) {
    } catch (const ThreadFault& e) {
      r.faulted.store(true);
      std::lock_guard lock(r.err_mu);
      r.error = e.what();
    } catch (const std::exception& e) {
      std::lock_guard lock(r.err_mu);
      r.error = e.what();
    }
    r.done.store(true);
  }

  const ThreadRec& find(u32 id) const {
    std::lock_guard lock(mu_);
    for (const auto& r : threads_)
      if (r->id == id) return *r;
    throw Error("unknown thread id");
  }

  Graph& graph_;
  mutable std::mutex mu_;
  std::vector<std::optional<u32>> slots_;
  std::vector<std::unique_ptr<ThreadRec>> threads_;
  u32 next_id_ = 1;
};

}  // namespace hwros::hw
