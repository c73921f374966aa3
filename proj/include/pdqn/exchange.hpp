#pragma once

// Synchronous neighbor exchange: the only channel through which node code
// sees data owned by other nodes.

#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pdqn/network.hpp"

namespace pdqn {

/// A node asked for data it cannot legally hold.
class LocalityViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Payloads delivered to one node in one round, keyed by sender.
class Mailbox {
 public:
  Mailbox() = default;
  Mailbox(int owner, std::span<const int> neighborhood);

  int owner() const { return owner_; }
  bool has(int sender) const;
  /// Throws LocalityViolation unless sender is a neighbor whose payload
  /// arrived this round.
  const Vector& from(int sender) const;
  std::size_t size() const;

  void deliver(int sender, Vector payload);

 private:
  int owner_ = -1;
  std::vector<int> neighborhood_;
  std::vector<std::optional<Vector>> slots_;
};

struct Phase {
  enum class Kind { broadcast, scatter };
  std::string name;
  Kind kind = Kind::broadcast;
};

/// What one node sends in one round. Broadcast: the same vector to every
/// neighbor. Scatter: one vector per neighborhood slot (own slot ignored).
struct Outbox {
  Vector broadcast;
  std::vector<Vector> scatter;
};

/// Broadcast rounds per iteration plus cumulative per-node counts. One
/// exchange is one synchronous round in which every node sends one p-vector
/// to each neighbor.
class ExchangeLedger {
 public:
  explicit ExchangeLedger(int nodes = 0) : per_node_(static_cast<std::size_t>(nodes), 0) {}

  void begin_iteration() { rounds_per_iteration_.push_back(0); }
  void record_round(int sender_count_check, int payload_dim);

  const std::vector<int>& rounds_per_iteration() const { return rounds_per_iteration_; }
  const std::vector<long long>& per_node() const { return per_node_; }
  const std::vector<int>& payload_dims() const { return payload_dims_; }
  long long total_rounds() const;

 private:
  std::vector<int> rounds_per_iteration_;
  std::vector<int> payload_dims_;
  std::vector<long long> per_node_;
};

/// Fixed-size worker pool running index loops to completion.
class ParallelFor {
 public:
  explicit ParallelFor(unsigned threads);
  ~ParallelFor();
  ParallelFor(const ParallelFor&) = delete;
  ParallelFor& operator=(const ParallelFor&) = delete;

  void run(int count, const std::function<void(int)>& body);
  unsigned threads() const { return static_cast<unsigned>(workers_.size()); }

 private:
  void worker_loop();

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(int)>* body_ = nullptr;
  int count_ = 0;
  int next_ = 0;
  int active_ = 0;
  unsigned long long generation_ = 0;
  bool stop_ = false;
};

/// Runs one phase at a time: every node emits, the harness routes payloads
/// along graph edges only, then every node absorbs its own mailbox.
class RoundExecutor {
 public:
  RoundExecutor(const Topology& topology, int payload_dim, bool parallel, unsigned threads = 4);

  void for_each_node(const std::function<void(int)>& body);

  void round(const Phase& phase, const std::function<Outbox(int)>& emit,
             const std::function<void(int, const Mailbox&)>& absorb, ExchangeLedger* ledger);

  bool parallel() const { return pool_ != nullptr; }

 private:
  const Topology* topology_;
  int payload_dim_;
  std::unique_ptr<ParallelFor> pool_;
};

}  // namespace pdqn
