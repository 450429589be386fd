#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cnp/core.hpp"
#include "cnp/messaging.hpp"

namespace cnp {

/// Delivery delay generator: base plus a seeded draw from [0, jitter].
class LatencyModel {
public:
    LatencyModel(LogicalTime base, LogicalTime jitter, std::uint64_t seed)
        : base_(base), jitter_(jitter), rng_(seed) {}

    LogicalTime base() const { return base_; }
    LogicalTime jitter() const { return jitter_; }

    LogicalTime sample() {
        return base_ + (jitter_ == 0 ? 0 : rng_.below(jitter_ + 1));
    }

private:
    LogicalTime base_;
    LogicalTime jitter_;
    Rng rng_;
};

/// Within one tick, deliveries land before injected control actions, control
/// actions before bid deadlines, deadlines before the work step. The phase
/// ordering keeps "a change arrives the same tick a deadline fires" cases
/// deterministic instead of insertion-order dependent.
enum class EventPhase : int {
    Delivery = 0,
    Control = 1,
    Deadline = 2,
    Work = 3,
};

/// Message transport plus event loop. Owns the logical clock. Agents are
/// registered under their ids; send() samples a latency, stamps
/// delivered_at, and preserves per-(sender, receiver) FIFO order by
/// clamping to the previous delivery time on that pair.
class Network {
public:
    using DeliveryHandler = std::function<void(const Envelope&, LogicalTime)>;
    using Action = std::function<void(LogicalTime)>;

    explicit Network(LatencyModel latency) : latency_(latency) {}

    void register_agent(const AgentId& id, DeliveryHandler handler) {
        handlers_[id] = std::move(handler);
    }

    bool knows(const AgentId& id) const { return handlers_.contains(id); }

    /// Every envelope accepted for transport is reported here, in send
    /// order, with both timestamps already stamped.
    void set_trace_sink(std::function<void(const Envelope&)> sink) { sink_ = std::move(sink); }

    LogicalTime now() const { return now_; }
    std::uint64_t sent_count() const { return sent_; }
    std::uint64_t delivered_count() const { return delivered_; }

    /// Accepts an envelope for delivery and returns the delivery tick.
    LogicalTime send(Envelope env) {
        if (!handlers_.contains(env.receiver)) {
            throw RoutingError("no agent registered as '" + env.receiver + "'");
        }
        LogicalTime delivered = env.sent_at + latency_.sample();
        auto& floor = pair_floor_[std::pair(env.sender, env.receiver)];
        if (delivered < floor) delivered = floor;
        floor = delivered;
        env.delivered_at = delivered;
        ++sent_;
        if (sink_) sink_(env);
        push(delivered, EventPhase::Delivery, Event{std::move(env), nullptr});
        return delivered;
    }

    void schedule(LogicalTime at, EventPhase phase, Action action) {
        push(at, phase, Event{std::nullopt, std::move(action)});
    }

    /// Runs events in (time, phase, insertion) order until the queue drains.
    /// Returns the time of the last processed event. An event scheduled past
    /// max_ticks means the run is stuck; the error lists the conversations
    /// of still-undelivered envelopes.
    LogicalTime run_until_quiescent(LogicalTime max_ticks) {
        LogicalTime last = 0;
        while (!queue_.empty()) {
            const QueueItem& top = queue_.top();
            if (top.at > max_ticks) {
                throw TimeoutError(
                    "event queue still active past tick " + std::to_string(max_ticks),
                    pending_conversations());
            }
            QueueItem item = top;
            queue_.pop();
            now_ = item.at;
            last = item.at;
            if (item.event.envelope) {
                ++delivered_;
                handlers_.at(item.event.envelope->receiver)(*item.event.envelope, now_);
            } else {
                item.event.action(now_);
            }
        }
        return last;
    }

private:
    struct Event {
        std::optional<Envelope> envelope;
        Action action;
    };

    struct QueueItem {
        LogicalTime at;
        int phase;
        std::uint64_t seq;
        Event event;

        bool operator>(const QueueItem& other) const {
            if (at != other.at) return at > other.at;
            if (phase != other.phase) return phase > other.phase;
            return seq > other.seq;
        }
    };

    void push(LogicalTime at, EventPhase phase, Event event) {
        queue_.push(QueueItem{at, static_cast<int>(phase), seq_++, std::move(event)});
    }

    std::vector<std::string> pending_conversations() const {
        std::set<std::string> unique;
        auto copy = queue_;
        while (!copy.empty()) {
            if (copy.top().event.envelope) unique.insert(copy.top().event.envelope->conversation_id);
            copy.pop();
        }
        return {unique.begin(), unique.end()};
    }

    LatencyModel latency_;
    std::map<AgentId, DeliveryHandler> handlers_;
    std::map<std::pair<AgentId, AgentId>, LogicalTime> pair_floor_;
    std::function<void(const Envelope&)> sink_;
    std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> queue_;
    std::uint64_t seq_ = 0;
    std::uint64_t sent_ = 0;
    std::uint64_t delivered_ = 0;
    LogicalTime now_ = 0;
};

}  // namespace cnp
