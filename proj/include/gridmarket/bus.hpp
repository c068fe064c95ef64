#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gridmarket/rng.hpp"

namespace gridmarket {

/// Hierarchical topic path, rendered "seg/seg/seg". Segments are non-empty
/// and case-sensitive.
struct Topic {
  std::vector<std::string> segments;

  Topic() = default;
  explicit Topic(std::vector<std::string> segs) : segments(std::move(segs)) { check(); }

  static Topic parse(const std::string& path) {
    Topic t;
    std::size_t start = 0;
    while (start <= path.size()) {
      const std::size_t slash = path.find('/', start);
      const std::size_t end = (slash == std::string::npos) ? path.size() : slash;
      t.segments.push_back(path.substr(start, end - start));
      if (slash == std::string::npos) break;
      start = slash + 1;
    }
    t.check();
    return t;
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (i) out += '/';
      out += segments[i];
    }
    return out;
  }

  bool operator==(const Topic& other) const { return segments == other.segments; }

 private:
  void check() const {
    if (segments.empty()) throw std::invalid_argument("topic: empty path");
    for (const auto& s : segments)
      if (s.empty()) throw std::invalid_argument("topic: empty segment");
  }
};

/// True iff pattern's segments are a prefix of topic's segments; equal
/// lengths mean an exact match. Subscribing to a higher-level subtopic
/// therefore receives everything beneath it.
inline bool topic_matches(const Topic& pattern, const Topic& topic) {
  if (pattern.segments.size() > topic.segments.size()) return false;
  return std::equal(pattern.segments.begin(), pattern.segments.end(), topic.segments.begin());
}

/// Flat numeric payload keyed by field name.
struct Message {
  Topic topic;
  std::map<std::string, double> payload;
  std::string publisher;
  long publish_round = 0;  // stamped by the bus
};

/// Fault-injection knobs. Same seed, same schedule.
struct DeliveryPolicy {
  double drop_probability = 0.0;
  int delay_rounds = 0;  // per-message delay drawn uniformly from [0, delay_rounds]
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(drop_probability >= 0.0 && drop_probability <= 1.0))
      throw std::invalid_argument("delivery: drop_probability must be in [0, 1]");
    if (delay_rounds < 0)
      throw std::invalid_argument("delivery: delay_rounds must be >= 0");
  }
};

struct BusEvent {
  enum class Kind { publish, deliver, drop };
  long round = 0;
  Kind kind = Kind::publish;
  std::string topic;
  std::string publisher;
  std::string subscriber;  // empty for publish/drop
};

inline const char* to_string(BusEvent::Kind k) {
  switch (k) {
    case BusEvent::Kind::publish: return "publish";
    case BusEvent::Kind::deliver: return "deliver";
    case BusEvent::Kind::drop: return "drop";
  }
  return "?";
}

/// In-process publish/subscribe bus. One deliver_round() is one heartbeat
/// tick: queued messages whose publish round plus sampled delay has come due
/// move into every matching subscriber's inbox, once per subscriber, in a
/// deterministic order. Single-owner sequential state machine.
class MessageBus {
 public:
  explicit MessageBus(DeliveryPolicy policy = {}, bool record_events = false)
      : policy_(policy), rng_(policy.rng_seed), record_events_(record_events) {
    policy_.validate();
  }

  /// Registers (subscriber, pattern); duplicate pairs are idempotent and
  /// return the original subscription id.
  int subscribe(const std::string& subscriber, const Topic& pattern) {
    auto& sub = subscribers_[subscriber];
    for (const auto& [existing, id] : sub.patterns)
      if (existing == pattern) return id;
    const int id = next_subscription_id_++;
    sub.patterns.emplace_back(pattern, id);
    return id;
  }

  int subscribe(const std::string& subscriber, const std::string& pattern) {
    return subscribe(subscriber, Topic::parse(pattern));
  }

  /// Stamps the message with the current round and enqueues it, or drops it
  /// now if the policy says so. Per-message drop and delay draws happen here,
  /// in publish order, which keeps the whole schedule reproducible.
  void publish(Message msg) {
    if (msg.topic.segments.empty())
      throw std::invalid_argument("publish: malformed topic");
    msg.publish_round = round_;
    ++published_;
    if (policy_.drop_probability > 0.0 && rng_.bernoulli(policy_.drop_probability)) {
      ++dropped_;
      record(BusEvent::Kind::drop, msg.topic.str(), msg.publisher, "");
      return;
    }
    long delay = 0;
    if (policy_.delay_rounds > 0)
      delay = static_cast<long>(rng_.uniform_int(static_cast<std::uint64_t>(policy_.delay_rounds)));
    record(BusEvent::Kind::publish, msg.topic.str(), msg.publisher, "");
    queue_.push_back(Queued{std::move(msg), round_ + delay});
  }

  /// Advances one heartbeat. Returns the number of inbox insertions (one
  /// message fanned out to k subscribers counts k).
  std::size_t deliver_round() {
    std::vector<Queued> due;
    std::vector<Queued> rest;
    for (auto& q : queue_) {
      if (q.due_round <= round_)
        due.push_back(std::move(q));
      else
        rest.push_back(std::move(q));
    }
    queue_ = std::move(rest);
    std::stable_sort(due.begin(), due.end(), [](const Queued& a, const Queued& b) {
      if (a.msg.publish_round != b.msg.publish_round)
        return a.msg.publish_round < b.msg.publish_round;
      if (a.msg.publisher != b.msg.publisher) return a.msg.publisher < b.msg.publisher;
      return a.msg.topic.str() < b.msg.topic.str();
    });
    std::size_t insertions = 0;
    for (auto& q : due) {
      ++dequeued_;
      for (auto& [name, sub] : subscribers_) {
        bool matched = false;
        for (const auto& [pattern, id] : sub.patterns) {
          if (topic_matches(pattern, q.msg.topic)) {
            matched = true;
            break;
          }
        }
        if (matched) {
          sub.inbox.push_back(q.msg);
          ++insertions;
          record(BusEvent::Kind::deliver, q.msg.topic.str(), q.msg.publisher, name);
        }
      }
    }
    ++round_;
    return insertions;
  }

  /// Returns and clears the subscriber's inbox in delivery order. Unknown
  /// subscribers get an empty list.
  std::vector<Message> drain_inbox(const std::string& subscriber) {
    auto it = subscribers_.find(subscriber);
    if (it == subscribers_.end()) return {};
    std::vector<Message> out = std::move(it->second.inbox);
    it->second.inbox.clear();
    return out;
  }

  long current_round() const { return round_; }
  std::size_t published_count() const { return published_; }
  std::size_t dropped_count() const { return dropped_; }
  std::size_t dequeued_count() const { return dequeued_; }
  std::size_t queued_count() const { return queue_.size(); }

  const std::vector<BusEvent>& events() const { return events_; }
  std::vector<BusEvent> take_events() { return std::move(events_); }

  static void write_event_csv(std::ostream& os, const std::vector<BusEvent>& events) {
    os << "round,event,topic,publisher,subscriber\n";
    for (const auto& e : events)
      os << e.round << ',' << to_string(e.kind) << ',' << e.topic << ','
         << e.publisher << ',' << e.subscriber << '\n';
  }

 private:
  struct Queued {
    Message msg;
    long due_round = 0;
  };
  struct Subscriber {
    std::vector<std::pair<Topic, int>> patterns;
    std::vector<Message> inbox;
  };

  void record(BusEvent::Kind kind, std::string topic, std::string publisher,
              std::string subscriber) {
    if (!record_events_) return;
    events_.push_back(BusEvent{round_, kind, std::move(topic), std::move(publisher),
                               std::move(subscriber)});
  }

  DeliveryPolicy policy_;
  Rng rng_;
  bool record_events_ = false;
  long round_ = 0;
  int next_subscription_id_ = 0;
  std::size_t published_ = 0, dropped_ = 0, dequeued_ = 0;
  std::vector<Queued> queue_;
  std::map<std::string, Subscriber> subscribers_;  // ordered: deterministic fan-out
  std::vector<BusEvent> events_;
};

}  // namespace gridmarket
