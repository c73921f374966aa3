#include "pdqn/exchange.hpp"

#include <algorithm>
#include <numeric>

namespace pdqn {

Mailbox::Mailbox(int owner, std::span<const int> neighborhood)
    : owner_(owner), neighborhood_(neighborhood.begin(), neighborhood.end()), slots_(neighborhood.size()) {}

bool Mailbox::has(int sender) const {
  auto it = std::lower_bound(neighborhood_.begin(), neighborhood_.end(), sender);
  if (it == neighborhood_.end() || *it != sender || sender == owner_) return false;
  return slots_[static_cast<std::size_t>(it - neighborhood_.begin())].has_value();
}

const Vector& Mailbox::from(int sender) const {
  auto it = std::lower_bound(neighborhood_.begin(), neighborhood_.end(), sender);
  if (sender == owner_ || it == neighborhood_.end() || *it != sender)
    throw LocalityViolation("node " + std::to_string(owner_) + " requested data from non-neighbor " +
                            std::to_string(sender));
  const auto& slot = slots_[static_cast<std::size_t>(it - neighborhood_.begin())];
  if (!slot) throw LocalityViolation("node " + std::to_string(owner_) + " has no payload from " + std::to_string(sender));
  return *slot;
}

std::size_t Mailbox::size() const {
  return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); }));
}

void Mailbox::deliver(int sender, Vector payload) {
  auto it = std::lower_bound(neighborhood_.begin(), neighborhood_.end(), sender);
  if (sender == owner_ || it == neighborhood_.end() || *it != sender)
    throw LocalityViolation("delivery from " + std::to_string(sender) + " to non-neighbor " + std::to_string(owner_));
  slots_[static_cast<std::size_t>(it - neighborhood_.begin())] = std::move(payload);
}

void ExchangeLedger::record_round(int sender_count, int payload_dim) {
  if (rounds_per_iteration_.empty()) rounds_per_iteration_.push_back(0);
  ++rounds_per_iteration_.back();
  payload_dims_.push_back(payload_dim);
  for (int i = 0; i < sender_count && i < static_cast<int>(per_node_.size()); ++i) ++per_node_[static_cast<std::size_t>(i)];
}

long long ExchangeLedger::total_rounds() const {
  return std::accumulate(rounds_per_iteration_.begin(), rounds_per_iteration_.end(), 0LL);
}

ParallelFor::ParallelFor(unsigned threads) {
  threads = std::max(1u, threads);
  for (unsigned t = 0; t < threads; ++t) workers_.emplace_back([this] { worker_loop(); });
}

ParallelFor::~ParallelFor() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& w : workers_) w.join();
}

void ParallelFor::worker_loop() {
  unsigned long long seen = 0;
  std::unique_lock lock(mutex_);
  for (;;) {
    wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    ++active_;
    while (next_ < count_) {
      int index = next_++;
      lock.unlock();
      (*body_)(index);
      lock.lock();
    }
    if (--active_ == 0) done_.notify_all();
  }
}

void ParallelFor::run(int count, const std::function<void(int)>& body) {
  std::unique_lock lock(mutex_);
  body_ = &body;
  count_ = count;
  next_ = 0;
  ++generation_;
  wake_.notify_all();
  done_.wait(lock, [&] { return next_ >= count_ && active_ == 0; });
  body_ = nullptr;
}

RoundExecutor::RoundExecutor(const Topology& topology, int payload_dim, bool parallel, unsigned threads)
    : topology_(&topology), payload_dim_(payload_dim) {
  if (parallel) pool_ = std::make_unique<ParallelFor>(threads);
}

void RoundExecutor::for_each_node(const std::function<void(int)>& body) {
  const int n = topology_->size();
  if (pool_) {
    pool_->run(n, body);
  } else {
    for (int i = 0; i < n; ++i) body(i);
  }
}

void RoundExecutor::round(const Phase& phase, const std::function<Outbox(int)>& emit,
                          const std::function<void(int, const Mailbox&)>& absorb, ExchangeLedger* ledger) {
  const Topology& t = *topology_;
  const int n = t.size();
  std::vector<Outbox> out(static_cast<std::size_t>(n));
  for_each_node([&](int i) { out[static_cast<std::size_t>(i)] = emit(i); });

  std::vector<Mailbox> boxes;
  boxes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) boxes.emplace_back(i, t.neighborhood(i));
  for (int j = 0; j < n; ++j) {
    const Outbox& o = out[static_cast<std::size_t>(j)];
    auto nb = t.neighborhood(j);
    if (phase.kind == Phase::Kind::broadcast) {
      if (o.broadcast.size() != payload_dim_)
        throw std::logic_error("phase '" + phase.name + "': node " + std::to_string(j) + " broadcast a payload of wrong size");
      for (int i : nb)
        if (i != j) boxes[static_cast<std::size_t>(i)].deliver(j, o.broadcast);
    } else {
      if (o.scatter.size() != nb.size())
        throw std::logic_error("phase '" + phase.name + "': node " + std::to_string(j) + " scattered the wrong number of payloads");
      for (std::size_t k = 0; k < nb.size(); ++k) {
        if (nb[k] == j) continue;
        if (o.scatter[k].size() != payload_dim_)
          throw std::logic_error("phase '" + phase.name + "': scattered payload of wrong size");
        boxes[static_cast<std::size_t>(nb[k])].deliver(j, o.scatter[k]);
      }
    }
  }
  if (ledger) ledger->record_round(n, payload_dim_);
  for_each_node([&](int i) { absorb(i, boxes[static_cast<std::size_t>(i)]); });
}

}  // namespace pdqn
