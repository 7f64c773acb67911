#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

namespace fdg {

class ChannelError : public std::runtime_error {
 public:
  explicit ChannelError(const std::string& what) : std::runtime_error(what) {}
};

class AbortedError : public std::runtime_error {
 public:
  explicit AbortedError(const std::string& what) : std::runtime_error(what) {}
};

// Bounded single-producer single-consumer FIFO between adjacent pipeline
// workers. Blocking calls poll a shared abort flag so a failed run can tear
// down without leaving threads parked on condition variables.
template <typename T>
class BoundedChannel {
 public:
  explicit BoundedChannel(std::size_t capacity, const std::atomic<bool>* abort = nullptr)
      : capacity_(capacity), abort_(abort) {
    if (capacity_ == 0) throw ChannelError("channel capacity must be >= 1");
  }

  // Blocks while full.
  void push(T v) {
    std::unique_lock lock(m_);
    while (q_.size() >= capacity_) {
      check_abort();
      if (closed_) throw ChannelError("push on closed channel");
      not_full_.wait_for(lock, poll_interval_);
    }
    if (closed_) throw ChannelError("push on closed channel");
    q_.push_back(std::move(v));
    not_empty_.notify_one();
  }

  // Non-blocking push; fails when full.
  bool try_push(T v) {
    std::lock_guard lock(m_);
    if (closed_) throw ChannelError("push on closed channel");
    if (q_.size() >= capacity_) return false;
    q_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(m_);
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }

  // Pops the head only when it satisfies the predicate.
  template <typename Pred>
  std::optional<T> pop_if(Pred&& pred) {
    std::lock_guard lock(m_);
    if (q_.empty() || !pred(q_.front())) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }

  // Blocks until an item is available or the channel is closed and drained
  // (returns nullopt in that case).
  std::optional<T> pop() {
    std::unique_lock lock(m_);
    while (q_.empty()) {
      if (closed_) return std::nullopt;
      check_abort();
      not_empty_.wait_for(lock, poll_interval_);
    }
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }

  // No further pushes; pending items remain poppable.
  void close() {
    std::lock_guard lock(m_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  bool closed_and_empty() {
    std::lock_guard lock(m_);
    return closed_ && q_.empty();
  }

  std::size_t size() {
    std::lock_guard lock(m_);
    return q_.size();
  }

 private:
  void check_abort() const {
    if (abort_ && abort_->load(std::memory_order_relaxed))
      throw AbortedError("channel operation aborted");
  }

  static constexpr std::chrono::milliseconds poll_interval_{20};
  std::size_t capacity_;
  const std::atomic<bool>* abort_;
  std::mutex m_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> q_;
  bool closed_ = false;
};

// Aborts a free-running run that makes no progress within the window —
// starved queues otherwise hang forever.
class ProgressWatchdog {
 public:
  ProgressWatchdog(std::atomic<long>& progress, std::atomic<bool>& abort, long window_ms)
      : progress_(progress), abort_(abort), window_ms_(window_ms) {}

  // Returns true if the watchdog fired (abort was requested).
  bool poll_until(const std::function<bool()>& finished) {
    long last = progress_.load();
    auto last_change = std::chrono::steady_clock::now();
    while (!finished()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      const long now_v = progress_.load();
      const auto now_t = std::chrono::steady_clock::now();
      if (now_v != last) {
        last = now_v;
        last_change = now_t;
      } else if (std::chrono::duration_cast<std::chrono::milliseconds>(now_t - last_change).count() >
                 window_ms_) {
        abort_.store(true);
        return true;
      }
    }
    return false;
  }

 private:
  std::atomic<long>& progress_;
  std::atomic<bool>& abort_;
  long window_ms_;
};

}  // namespace fdg
