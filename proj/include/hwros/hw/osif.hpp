#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>

#include "hwros/core.hpp"

namespace hwros::hw {

/// Bounded FIFO of 32-bit words, the only channel between a hardware thread
/// and its delegate. Blocking, ordered, lossless; close() unblocks both ends.
class WordFifo {
 public:
  static constexpr std::size_t kCapacity = 16;

  bool push(u32 word) {
    std::unique_lock lock(mu_);
    cv_pop_.wait(lock, [&] { return q_.size() < kCapacity || closed_; });
    if (closed_) return false;
    q_.push_back(word);
    cv_push_.notify_one();
    return true;
  }

  std::optional<u32> pop() {
    std::unique_lock lock(mu_);
    cv_push_.wait(lock, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    const u32 w = q_.front();
    q_.pop_front();
    cv_pop_.notify_one();
    return w;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_push_.notify_all();
    cv_pop_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_push_, cv_pop_;
  std::deque<u32> q_;
  bool closed_ = false;
};

/// OSIF command opcodes. Values are arbitrary but stable.
enum class OsifOp : u32 {
  SubTake = 0x0001,
  Publish = 0x0002,
  SrvsTake = 0x0010,
  SrvsSendResponse = 0x0011,
  SrvcSendRequest = 0x0012,
  SrvcTake = 0x0013,
  ActSendGoal = 0x0020,
  ActTakeGoal = 0x0021,
  ActPublishFeedback = 0x0022,
  ActTakeFeedback = 0x0023,
  ActSendResult = 0x0024,
  ActTakeResult = 0x0025,
};

enum OsifStatus : u32 {
  kOk = 0,
  kTimeout = 1,
  kTypeMismatch = 2,
  kProtocolError = 3,
  kStopped = 4,
  kMiddlewareError = 5,
};

/// Frame shape per opcode: words after [opcode, resource] in the command,
/// and words after [status] in the response. Frame length is a pure
/// function of the opcode.
struct FrameShape {
  u32 args;
  u32 results;
};

inline std::optional<FrameShape> frame_shape(u32 opcode) {
  switch (static_cast<OsifOp>(opcode)) {
    case OsifOp::SubTake: return FrameShape{0, 1};
    case OsifOp::Publish: return FrameShape{1, 0};
    case OsifOp::SrvsTake: return FrameShape{0, 3};
    case OsifOp::SrvsSendResponse: return FrameShape{3, 0};
    case OsifOp::SrvcSendRequest: return FrameShape{1, 2};
    case OsifOp::SrvcTake: return FrameShape{2, 1};
    case OsifOp::ActSendGoal: return FrameShape{1, 2};
    case OsifOp::ActTakeGoal: return FrameShape{0, 3};
    case OsifOp::ActPublishFeedback: return FrameShape{3, 0};
    case OsifOp::ActTakeFeedback: return FrameShape{2, 1};
    case OsifOp::ActSendResult: return FrameShape{3, 0};
    case OsifOp::ActTakeResult: return FrameShape{2, 1};
  }
  return std::nullopt;
}

}  // namespace hwros::hw
