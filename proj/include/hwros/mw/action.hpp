#pragma once

#include "hwros/mw/graph.hpp"

namespace hwros::mw {

namespace detail {

/// Internal message carried on the two action services' bookkeeping legs:
/// the goal acceptance ack and the result request both name the goal id.
inline TypeHandle action_ack_type(TypeRegistry& reg) {
  if (auto h = reg.find("hwros_internal", msg::TypeKind::Msg, "ActionAck")) return *h;
  msg::MessageTypeDef def;
  def.group = "hwros_internal";
  def.kind = msg::TypeKind::Msg;
  def.name = "ActionAck";
  def.fields = {{"goal_lo", msg::FieldType::scalar(msg::FieldType::Kind::U32)},
                {"goal_hi", msg::FieldType::scalar(msg::FieldType::Kind::U32)}};
  return reg.register_type(std::move(def));
}

inline MessageInstance make_ack(mem::Arena& arena, TypeRegistry& reg, TypeHandle ack_type,
                                u64 goal_id) {
  MessageInstance inst = msg::alloc_message(arena, reg, ack_type);
  arena.poke_u32(inst.root + 0, static_cast<u32>(goal_id));
  arena.poke_u32(inst.root + 4, static_cast<u32>(goal_id >> 32));
  return inst;
}

inline u64 read_ack(const mem::Arena& arena, Addr root) {
  return static_cast<u64>(arena.peek_u32(root)) |
         (static_cast<u64>(arena.peek_u32(root + 4)) << 32);
}

}  // namespace detail

/// Action = goal service + result service + feedback topic. Feedback for a
/// goal is only accepted between goal acceptance and result delivery.
class ActionServer {
 public:
  /// Blocks for the next goal; acceptance is acknowledged on the goal
  /// service before returning. The caller owns the goal instance.
  std::optional<std::pair<u64, MessageInstance>> take_goal(Micros timeout) {
    auto req = goal_server_->take_request(timeout);
    if (!req) return std::nullopt;
    const u64 goal_id = req->first;
    {
      MessageInstance ack = detail::make_ack(graph_->arena(), graph_->registry(), ack_type_, goal_id);
      graph_->send_response(*goal_server_, goal_id, ack);
      msg::free_message(graph_->arena(), ack);
    }
    {
      std::lock_guard lock(mu_);
      goals_[goal_id] = GoalState{};
    }
    return req;
  }

  void publish_feedback(u64 goal_id, const MessageInstance& inst) {
    {
      std::lock_guard lock(mu_);
      auto it = goals_.find(goal_id);
      if (it == goals_.end()) throw Error("publish_feedback: unknown goal");
      if (it->second.result_sent) throw Error("publish_feedback: result already sent");
    }
    graph_->publish_corr(*feedback_pub_, inst, goal_id);
  }

  void send_result(u64 goal_id, const MessageInstance& inst) {
    {
      std::lock_guard lock(mu_);
      auto it = goals_.find(goal_id);
      if (it == goals_.end()) throw Error("send_result: unknown goal");
      if (it->second.result_sent) throw Error("send_result: result already sent");
    }
    const u64 result_corr = await_result_request(goal_id);
    graph_->send_response(*result_server_, result_corr, inst);
    std::lock_guard lock(mu_);
    goals_[goal_id].result_sent = true;
  }

  const std::string& action() const { return action_; }
  TypeHandle goal_type() const { return goal_server_->request_type(); }
  TypeHandle feedback_type() const { return feedback_pub_->type(); }
  TypeHandle result_type() const { return result_server_->response_type(); }
  u64 polling_us() const { return polling_us_; }

 private:
  friend class Graph;
  struct GoalState {
    bool result_sent = false;
  };

  /// The client files its result request right after the goal; match it to
  /// the goal id carried in its payload.
  u64 await_result_request(u64 goal_id) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    for (;;) {
      {
        std::lock_guard lock(mu_);
        auto it = result_corrs_.find(goal_id);
        if (it != result_corrs_.end()) return it->second;
      }
      auto req = result_server_->take_request(Micros(polling_us_));
      if (req) {
        const u64 gid = detail::read_ack(graph_->arena(), req->second.root);
        msg::free_message(graph_->arena(), req->second);
        std::lock_guard lock(mu_);
        result_corrs_[gid] = req->first;
        continue;
      }
      if (std::chrono::steady_clock::now() > deadline)
        throw Error("send_result: no result request for goal");
    }
  }

  Graph* graph_ = nullptr;
  std::string action_;
  TypeHandle ack_type_;
  u64 polling_us_ = 10000;
  std::shared_ptr<ServiceServer> goal_server_;
  std::shared_ptr<ServiceServer> result_server_;
  std::shared_ptr<Publisher> feedback_pub_;

  std::mutex mu_;
  std::map<u64, GoalState> goals_;
  std::map<u64, u64> result_corrs_;  // goal id -> result request corr
};

class ActionClient {
 public:
  /// Sends the goal and pre-files the result request; returns the goal id.
  u64 send_goal(const MessageInstance& goal) {
    const u64 goal_id = graph_->send_request(*goal_client_, goal);
    MessageInstance ack = detail::make_ack(graph_->arena(), graph_->registry(), ack_type_, goal_id);
    const u64 result_corr = graph_->send_request(*result_client_, ack);
    msg::free_message(graph_->arena(), ack);
    std::lock_guard lock(mu_);
    result_corr_[goal_id] = result_corr;
    return goal_id;
  }

  std::optional<MessageInstance> take_feedback(u64 goal_id, Micros timeout) {
    return feedback_sub_->take_matching(goal_id, timeout);
  }

  std::optional<MessageInstance> take_result(u64 goal_id, Micros timeout) {
    u64 result_corr;
    {
      std::lock_guard lock(mu_);
      auto it = result_corr_.find(goal_id);
      if (it == result_corr_.end()) throw Error("take_result: unknown goal");
      result_corr = it->second;
    }
    auto res = result_client_->take_response(result_corr, timeout);
    if (res) goal_client_->discard_response(goal_id);  // consume the acceptance ack
    return res;
  }

  const std::string& action() const { return action_; }
  Subscriber& feedback_subscriber() { return *feedback_sub_; }
  TypeHandle goal_type() const { return goal_client_->request_type(); }
  TypeHandle feedback_type() const { return feedback_sub_->type(); }
  TypeHandle result_type() const { return result_client_->response_type(); }

 private:
  friend class Graph;
  Graph* graph_ = nullptr;
  std::string action_;
  TypeHandle ack_type_;
  std::shared_ptr<ServiceClient> goal_client_;
  std::shared_ptr<ServiceClient> result_client_;
  std::shared_ptr<Subscriber> feedback_sub_;

  std::mutex mu_;
  std::map<u64, u64> result_corr_;
};

inline std::shared_ptr<ActionServer> Graph::create_action_server(
    const std::shared_ptr<Node>& node, const std::string& action, TypeHandle goal,
    TypeHandle feedback, TypeHandle result, u64 polling_us) {
  auto s = std::make_shared<ActionServer>();
  s->graph_ = this;
  s->action_ = action;
  s->polling_us_ = polling_us;
  s->ack_type_ = detail::action_ack_type(reg_);
  s->goal_server_ = create_service_server(node, action + "/_goal", goal, s->ack_type_, polling_us);
  s->result_server_ =
      create_service_server(node, action + "/_result", s->ack_type_, result, polling_us);
  s->feedback_pub_ = create_publisher(node, action + "/feedback", feedback);
  return s;
}

inline std::shared_ptr<ActionClient> Graph::create_action_client(
    const std::shared_ptr<Node>& node, const std::string& action, TypeHandle goal,
    TypeHandle feedback, TypeHandle result, u64 polling_us) {
  auto c = std::make_shared<ActionClient>();
  c->graph_ = this;
  c->action_ = action;
  c->ack_type_ = detail::action_ack_type(reg_);
  c->goal_client_ = create_service_client(node, action + "/_goal", goal, c->ack_type_, polling_us);
  c->result_client_ =
      create_service_client(node, action + "/_result", c->ack_type_, result, polling_us);
  c->feedback_sub_ = create_subscriber(node, action + "/feedback", feedback, 64, polling_us);
  return c;
}

}  // namespace hwros::mw
