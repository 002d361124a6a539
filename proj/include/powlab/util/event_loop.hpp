#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace powlab {

/// Single-threaded executor: posted tasks and due timers run one at a time in
/// the order they become ready. An optional hook runs after every task.
class EventLoop {
 public:
  using Task = std::function<void()>;
  using Clock = std::chrono::steady_clock;

  EventLoop() = default;
  ~EventLoop() { stop(); }

  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  void set_after_task(Task hook) { after_task_ = std::move(hook); }

  void start() {
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable() && std::this_thread::get_id() != thread_.get_id()) thread_.join();
  }

  void post(Task task) {
    {
      std::lock_guard lock(mu_);
      tasks_.push_back(std::move(task));
    }
    cv_.notify_all();
  }

  void post_after(std::chrono::milliseconds delay, Task task) {
    {
      std::lock_guard lock(mu_);
      timers_.push(Timer{Clock::now() + delay, next_timer_++, std::move(task)});
    }
    cv_.notify_all();
  }

  /// Runs `fn` on the loop and waits for its result.
  template <class Fn>
  auto call(Fn fn) -> decltype(fn()) {
    using R = decltype(fn());
    if (in_loop()) return fn();
    auto promise = std::make_shared<std::promise<R>>();
    auto future = promise->get_future();
    post([promise, fn = std::move(fn)]() mutable {
      try {
        if constexpr (std::is_void_v<R>) {
          fn();
          promise->set_value();
        } else {
          promise->set_value(fn());
        }
      } catch (...) {
        promise->set_exception(std::current_exception());
      }
    });
    return future.get();
  }

  bool in_loop() const { return std::this_thread::get_id() == thread_.get_id(); }

 private:
  struct Timer {
    Clock::time_point due;
    std::uint64_t seq;
    Task task;
    bool operator>(const Timer& o) const { return due != o.due ? due > o.due : seq > o.seq; }
  };

  void run() {
    std::unique_lock lock(mu_);
    while (!stopping_) {
      auto now = Clock::now();
      Task task;
      if (!timers_.empty() && timers_.top().due <= now) {
        task = std::move(const_cast<Timer&>(timers_.top()).task);
        timers_.pop();
      } else if (!tasks_.empty()) {
        task = std::move(tasks_.front());
        tasks_.pop_front();
      } else if (!timers_.empty()) {
        cv_.wait_until(lock, timers_.top().due);
        continue;
      } else {
        cv_.wait(lock);
        continue;
      }
      lock.unlock();
      try {
        task();
      } catch (const std::exception& e) {
        std::fprintf(stderr, "event loop task failed: %s\n", e.what());
      }
      if (after_task_) after_task_();
      lock.lock();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Task> tasks_;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers_;
  std::uint64_t next_timer_ = 0;
  bool stopping_ = false;
  Task after_task_;
  std::thread thread_;
};

}  // namespace powlab
