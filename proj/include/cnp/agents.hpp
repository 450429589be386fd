#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cnp/core.hpp"
#include "cnp/messaging.hpp"
#include "cnp/protocol.hpp"

namespace cnp {

/// Stamps envelopes with run-unique message ids and the active dialect's
/// keyword. Shared by every agent in a run so ids never collide.
class EnvelopeFactory {
public:
    explicit EnvelopeFactory(const Dialect& dialect) : dialect_(&dialect) {}

    const Dialect& dialect() const { return *dialect_; }

    Envelope make(const std::string& conversation, const AgentId& sender, const AgentId& receiver,
                  Performative performative, std::string payload, LogicalTime now) {
        Envelope env;
        env.msg_id = "m" + std::to_string(next_id_++);
        env.conversation_id = conversation;
        env.sender = sender;
        env.receiver = receiver;
        env.performative = performative;
        env.dialect_keyword = std::string(dialect_->keyword(performative));
        env.payload = std::move(payload);
        env.sent_at = now;
        return env;
    }

private:
    const Dialect* dialect_;
    std::uint64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Manager
// ---------------------------------------------------------------------------

struct ManagerConfig {
    ProtocolVariant variant = ProtocolVariant::Conventional;
    int retry_budget = 2;             // extra announcement rounds on empty auctions
    LogicalTime expiration_window = 4;  // ticks from announcement to bid deadline
};

/// Runs the manager side of the net: announces tasks, collects bids, awards,
/// tracks execution, and pushes mid-execution changes using the strategy the
/// variant dictates. Envelopes are returned, never sent; the caller owns
/// transport. The deadline callback must arrange for on_deadline(task,
/// attempt) to run at the given tick.
class ManagerAgent {
public:
    using DeadlineScheduler = std::function<void(const TaskId&, int attempt, LogicalTime at)>;

    ManagerAgent(AgentId id, ManagerConfig config, EnvelopeFactory& factory)
        : id_(std::move(id)), config_(config), factory_(&factory) {}

    const AgentId& id() const { return id_; }

    void set_deadline_scheduler(DeadlineScheduler scheduler) {
        schedule_deadline_ = std::move(scheduler);
    }

    /// Opens a contract and returns the call-for-proposals fan-out.
    std::vector<Envelope> announce(TaskSpec task, const std::vector<AgentId>& contractors,
                                   LogicalTime now) {
        if (contracts_.contains(task.task_id)) {
            throw std::invalid_argument("announce: task '" + task.task_id + "' already managed");
        }
        TaskId tid = task.task_id;
        ContractRecord record;
        record.task = std::move(task);
        contracts_.emplace(tid, std::move(record));
        roster_[tid] = contractors;
        attempt_[tid] = 0;
        retries_left_[tid] = config_.retry_budget;
        return announce_round(tid, now);
    }

    std::vector<Envelope> on_envelope(const Envelope& env, LogicalTime now) {
        switch (env.performative) {
            case Performative::Propose: return on_propose(env, now);
            case Performative::Refuse: return {};
            case Performative::Inform: return on_inform(env, now);
            case Performative::ConfirmChange: return on_confirm_change(env, now);
            case Performative::Failure: return on_failure(env, now);
            default: return {};
        }
    }

    /// Bid deadline for one announcement round. Stale rounds are no-ops.
    std::vector<Envelope> on_deadline(const TaskId& tid, int attempt, LogicalTime now) {
        auto it = contracts_.find(tid);
        if (it == contracts_.end()) return {};
        ContractRecord& record = it->second;
        if (attempt != attempt_[tid] || record.state != ContractState::Bidding) return {};

        std::vector<Bid> bids = std::move(active_bids_[tid]);
        active_bids_.erase(tid);
        if (bids.empty()) {
            if (retries_left_[tid] > 0) {
                retries_left_[tid] -= 1;
                return announce_round(tid, now);
            }
            set_state(record, ContractState::BidProcessing);
            set_state(record, ContractState::Failed);
            return {};
        }

        set_state(record, ContractState::BidProcessing);
        RankedList<Bid> ranked = rank_bids(std::move(bids));
        AgentId winner = *select_award(ranked);
        set_state(record, ContractState::Awarded);
        record.awarded_to = winner;

        std::vector<Envelope> out;
        out.push_back(factory_->make(tid, id_, winner, Performative::AcceptProposal,
                                     payload::award(tid), now));
        for (const auto& [bid, rank] : ranked.entries) {
            if (bid.contractor_id == winner) continue;
            out.push_back(factory_->make(tid, id_, bid.contractor_id,
                                         Performative::RejectProposal, payload::award(tid), now));
        }
        return out;
    }

    /// Injects a change into a live contract. Under the updated variant this
    /// asks the working contractor to absorb it; under the conventional one
    /// it cancels, and the re-announcement follows once the contractor
    /// acknowledges. A change against a completed contract is logged as
    /// rejected and produces no traffic.
    std::vector<Envelope> request_change(const TaskId& tid, std::string new_target,
                                         std::optional<BidSpecification> new_spec,
                                         LogicalTime now) {
        auto it = contracts_.find(tid);
        if (it == contracts_.end()) {
            throw std::invalid_argument("request_change: unknown task '" + tid + "'");
        }
        ContractRecord& record = it->second;

        TaskChange change;
        change.task_id = tid;
        change.new_target = std::move(new_target);
        change.new_bid_spec = std::move(new_spec);
        change.requested_at = now;

        if (record.state == ContractState::Completed) {
            record = apply_change(std::move(record), std::move(change), config_.variant, now);
            return {};
        }
        if (record.state != ContractState::Awarded && record.state != ContractState::InProgress) {
            throw std::logic_error("request_change: contract is " +
                                   std::string(to_string(record.state)));
        }

        std::vector<Envelope> out;
        if (config_.variant == ProtocolVariant::Updated) {
            out.push_back(factory_->make(
                tid, id_, *record.awarded_to, Performative::RequestChange,
                payload::change_request(tid, change.new_target, change.new_bid_spec,
                                        record.task.revision + 1),
                now));
        } else {
            out.push_back(factory_->make(tid, id_, *record.awarded_to, Performative::Cancel,
                                         payload::cancel(tid), now));
        }
        pending_change_.insert_or_assign(tid, std::move(change));
        return out;
    }

    /// Environment feedback: the awarded contractor was observed starting.
    void note_execution_started(const TaskId& tid, LogicalTime) {
        auto it = contracts_.find(tid);
        if (it == contracts_.end()) return;
        if (it->second.state == ContractState::Awarded) {
            set_state(it->second, ContractState::InProgress);
        }
    }

    const ContractRecord& contract(const TaskId& tid) const { return contracts_.at(tid); }
    bool manages(const TaskId& tid) const { return contracts_.contains(tid); }
    const std::map<TaskId, ContractRecord>& contracts() const { return contracts_; }

    bool all_terminal() const {
        for (const auto& [tid, record] : contracts_) {
            if (!is_terminal(record.state)) return false;
        }
        return true;
    }

    static bool is_terminal(ContractState s) {
        return s == ContractState::Completed || s == ContractState::Failed ||
               s == ContractState::Cancelled;
    }

private:
    /// All state changes funnel through here; an illegal one is a bug in
    /// this class, not in the caller.
    void set_state(ContractRecord& record, ContractState to) {
        if (!validate_transition(record.state, to, config_.variant)) {
            throw std::logic_error("manager produced illegal transition " +
                                   std::string(to_string(record.state)) + " -> " +
                                   std::string(to_string(to)));
        }
        record.state = to;
    }

    std::vector<Envelope> announce_round(const TaskId& tid, LogicalTime now) {
        ContractRecord& record = contracts_.at(tid);
        if (record.state == ContractState::Announced) {
            set_state(record, ContractState::Bidding);
        }
        attempt_[tid] += 1;
        active_bids_[tid].clear();
        record.task.expiration = now + config_.expiration_window;

        std::vector<Envelope> out;
        for (const AgentId& contractor : roster_.at(tid)) {
            out.push_back(factory_->make(tid, id_, contractor, Performative::CallForProposals,
                                         payload::task(record.task, attempt_[tid]), now));
        }
        if (schedule_deadline_) schedule_deadline_(tid, attempt_[tid], record.task.expiration);
        return out;
    }

    std::vector<Envelope> on_propose(const Envelope& env, LogicalTime now) {
        auto kv = kv_decode(env.payload);
        payload::ParsedBid parsed = payload::parse_bid(kv, env.sender);
        auto it = contracts_.find(parsed.bid.task_id);
        if (it == contracts_.end()) return {};
        ContractRecord& record = it->second;
        record.bids_received.push_back(parsed.bid);
        if (record.state == ContractState::Bidding && parsed.attempt == attempt_[parsed.bid.task_id] &&
            now <= record.task.expiration) {
            active_bids_[parsed.bid.task_id].push_back(parsed.bid);
        }
        return {};
    }

    std::vector<Envelope> on_inform(const Envelope& env, LogicalTime now) {
        auto kv = kv_decode(env.payload);
        TaskId tid = kv_require(kv, "task");
        auto it = contracts_.find(tid);
        if (it == contracts_.end()) return {};
        ContractRecord& record = it->second;
        std::string kind = kv_find(kv, "kind").value_or("interim");

        if (kind == "interim") {
            if (record.state == ContractState::Awarded) {
                set_state(record, ContractState::InProgress);
            }
            InterimReport report;
            report.task_id = tid;
            report.contractor_id = env.sender;
            report.progress_fraction = parse_double(kv_require(kv, "progress"), "progress");
            report.revision = static_cast<std::uint32_t>(
                parse_u64(kv_require(kv, "revision"), "revision"));
            report.at = env.sent_at;
            record.interim_reports.push_back(std::move(report));
            return {};
        }
        if (kind == "final") {
            if (record.state == ContractState::Awarded) {
                set_state(record, ContractState::InProgress);
            }
            if (record.state != ContractState::InProgress) return {};
            FinalReport report;
            report.task_id = tid;
            report.contractor_id = env.sender;
            report.deadline = parse_u64(kv_require(kv, "deadline"), "deadline");
            report.completed_at = parse_u64(kv_require(kv, "completed"), "completed");
            report.revision_completed = static_cast<std::uint32_t>(
                parse_u64(kv_require(kv, "revision"), "revision"));
            record.final_report = std::move(report);
            set_state(record, ContractState::Completed);
            // A change whose cancel or update raced the completion is too late.
            if (auto pending = pending_change_.find(tid); pending != pending_change_.end()) {
                record = apply_change(std::move(record), std::move(pending->second),
                                      config_.variant, now);
                pending_change_.erase(pending);
            }
            return {};
        }
        if (kind == "cancel-ack") {
            auto pending = pending_change_.find(tid);
            if (pending == pending_change_.end() || record.state != ContractState::InProgress) {
                return {};
            }
            record = apply_change(std::move(record), std::move(pending->second), config_.variant,
                                  now);
            pending_change_.erase(pending);
            return announce_round(tid, now);
        }
        return {};
    }

    std::vector<Envelope> on_confirm_change(const Envelope& env, LogicalTime now) {
        auto kv = kv_decode(env.payload);
        TaskId tid = kv_require(kv, "task");
        auto it = contracts_.find(tid);
        if (it == contracts_.end()) return {};
        ContractRecord& record = it->second;
        auto pending = pending_change_.find(tid);
        if (pending == pending_change_.end() || record.state != ContractState::InProgress) {
            return {};
        }
        if (!validate_transition(record.state, record.state, config_.variant)) {
            throw std::logic_error("absorbed change outside the updated variant");
        }
        record = apply_change(std::move(record), std::move(pending->second), config_.variant, now);
        pending_change_.erase(pending);
        return {};
    }

    std::vector<Envelope> on_failure(const Envelope& env, LogicalTime) {
        auto kv = kv_decode(env.payload);
        TaskId tid = kv_require(kv, "task");
        auto it = contracts_.find(tid);
        if (it == contracts_.end()) return {};
        ContractRecord& record = it->second;
        if (record.state == ContractState::Awarded) {
            set_state(record, ContractState::InProgress);
        }
        if (record.state != ContractState::InProgress) return {};
        set_state(record, ContractState::Cancelled);
        record.awarded_to.reset();
        pending_change_.erase(tid);
        return {};
    }

    AgentId id_;
    ManagerConfig config_;
    EnvelopeFactory* factory_;
    DeadlineScheduler schedule_deadline_;
    std::map<TaskId, ContractRecord> contracts_;
    std::map<TaskId, std::vector<AgentId>> roster_;
    std::map<TaskId, int> attempt_;
    std::map<TaskId, int> retries_left_;
    std::map<TaskId, std::vector<Bid>> active_bids_;
    std::map<TaskId, TaskChange> pending_change_;
};

// ---------------------------------------------------------------------------
// Contractor
// ---------------------------------------------------------------------------

/// What a contractor does with accumulated progress when a change lands.
enum class ProgressPolicy { Reset, Keep };

inline std::string_view to_string(ProgressPolicy p) {
    return p == ProgressPolicy::Reset ? "reset" : "keep";
}

inline ProgressPolicy parse_progress_policy(std::string_view name) {
    if (name == "reset") return ProgressPolicy::Reset;
    if (name == "keep") return ProgressPolicy::Keep;
    throw ConfigError("unknown progress policy '" + std::string(name) + "' (expected reset|keep)");
}

struct ContractorConfig {
    std::set<std::string> capabilities;
    double work_rate = 0.2;  // progress per execution tick
    int report_interval = 5;  // ticks between interim reports, per revision
    ProgressPolicy progress_policy = ProgressPolicy::Reset;
};

/// Contractor side: bids on calls within its capabilities, executes awarded
/// work one tick at a time, and reports. Callbacks let the embedding
/// scenario mirror assignment changes into its world model.
class ContractorAgent {
public:
    using CostFn = std::function<double(const TaskSpec&)>;

    ContractorAgent(AgentId id, ContractorConfig config, EnvelopeFactory& factory)
        : id_(std::move(id)), config_(std::move(config)), factory_(&factory) {}

    const AgentId& id() const { return id_; }

    void set_cost_fn(CostFn fn) { cost_fn_ = std::move(fn); }

    std::function<void(const TaskSpec&, LogicalTime)> on_assigned;
    std::function<void(const TaskSpec&, LogicalTime)> on_retargeted;
    std::function<void(const TaskId&, LogicalTime)> on_released;

    std::vector<Envelope> on_envelope(const Envelope& env, LogicalTime now) {
        switch (env.performative) {
            case Performative::CallForProposals: return on_cfp(env, now);
            case Performative::AcceptProposal: return on_accept(env, now);
            case Performative::RejectProposal: return on_reject(env);
            case Performative::RequestChange: return on_request_change(env, now);
            case Performative::Cancel: return on_cancel(env, now);
            default: return {};
        }
    }

    /// One tick of execution across all held contracts. Finished contracts
    /// emit their final report and close.
    std::vector<Envelope> execute_tick(LogicalTime now) {
        std::vector<Envelope> out;
        std::vector<TaskId> finished;
        for (auto& [tid, work] : active_) {
            if (work.progress < 1.0) work.progress += config_.work_rate;
            work.ticks_since_report += 1;
            if (work.progress >= 1.0 - kProgressEps) {
                FinalReport report;
                report.task_id = tid;
                report.contractor_id = id_;
                report.deadline = work.task.expiration;
                report.completed_at = now;
                report.revision_completed = work.task.revision;
                out.push_back(factory_->make(work.conversation, id_, work.manager,
                                             Performative::Inform, payload::final_report(report),
                                             now));
                finished.push_back(tid);
            } else if (config_.report_interval > 0 &&
                       work.ticks_since_report >= config_.report_interval) {
                work.ticks_since_report = 0;
                InterimReport report;
                report.task_id = tid;
                report.contractor_id = id_;
                report.progress_fraction = work.progress;
                report.revision = work.task.revision;
                report.at = now;
                out.push_back(factory_->make(work.conversation, id_, work.manager,
                                             Performative::Inform, payload::interim(report), now));
            }
        }
        for (const TaskId& tid : finished) {
            active_.erase(tid);
            if (on_released) on_released(tid, now);
        }
        return out;
    }

    /// External work source, e.g. the scenario marking a capture.
    void set_progress(const TaskId& tid, double progress) {
        auto it = active_.find(tid);
        if (it != active_.end()) it->second.progress = progress;
    }

    /// Abandons a contract the environment made impossible.
    std::vector<Envelope> fail_contract(const TaskId& tid, std::string_view reason,
                                        LogicalTime now) {
        auto it = active_.find(tid);
        if (it == active_.end()) return {};
        Envelope env = factory_->make(it->second.conversation, id_, it->second.manager,
                                      Performative::Failure, payload::failure(tid, reason), now);
        active_.erase(it);
        if (on_released) on_released(tid, now);
        return {env};
    }

    struct ActiveContract {
        TaskSpec task;
        AgentId manager;
        std::string conversation;
        double progress = 0.0;
        int ticks_since_report = 0;
    };

    bool has_active(const TaskId& tid) const { return active_.contains(tid); }
    const std::map<TaskId, ActiveContract>& active_contracts() const { return active_; }

private:
    static constexpr double kProgressEps = 1e-9;

    std::vector<Envelope> on_cfp(const Envelope& env, LogicalTime now) {
        auto kv = kv_decode(env.payload);
        payload::ParsedTask parsed = payload::parse_task(kv);
        const TaskId& tid = parsed.spec.task_id;

        if (active_.contains(tid)) {
            return {factory_->make(env.conversation_id, id_, env.sender, Performative::Refuse,
                                   payload::refusal(tid, "busy", parsed.attempt), now)};
        }
        if (now > parsed.spec.expiration) {
            return {factory_->make(env.conversation_id, id_, env.sender, Performative::Refuse,
                                   payload::refusal(tid, "expired", parsed.attempt), now)};
        }
        double cost = cost_fn_ ? cost_fn_(parsed.spec) : 0.0;
        if (!eligible(parsed.spec.bid_spec, config_.capabilities, cost)) {
            return {factory_->make(env.conversation_id, id_, env.sender, Performative::Refuse,
                                   payload::refusal(tid, "ineligible", parsed.attempt), now)};
        }

        Pending pending;
        pending.task = parsed.spec;
        pending.manager = env.sender;
        pending.conversation = env.conversation_id;
        pending.attempt = parsed.attempt;
        pending_.insert_or_assign(tid, std::move(pending));

        Bid bid{tid, id_, cost, now};
        return {factory_->make(env.conversation_id, id_, env.sender, Performative::Propose,
                               payload::bid(bid, parsed.attempt), now)};
    }

    std::vector<Envelope> on_accept(const Envelope& env, LogicalTime now) {
        auto kv = kv_decode(env.payload);
        TaskId tid = kv_require(kv, "task");
        auto it = pending_.find(tid);
        if (it == pending_.end()) return {};

        ActiveContract work;
        work.task = it->second.task;
        work.manager = it->second.manager;
        work.conversation = it->second.conversation;
        pending_.erase(it);
        auto slot = active_.insert_or_assign(tid, std::move(work)).first;
        if (on_assigned) on_assigned(slot->second.task, now);
        return {};
    }

    std::vector<Envelope> on_reject(const Envelope& env) {
        auto kv = kv_decode(env.payload);
        pending_.erase(kv_require(kv, "task"));
        return {};
    }

    std::vector<Envelope> on_request_change(const Envelope& env, LogicalTime now) {
        auto kv = kv_decode(env.payload);
        TaskId tid = kv_require(kv, "task");
        auto it = active_.find(tid);
        if (it == active_.end()) return {};
        ActiveContract& work = it->second;

        work.task.target = kv_require(kv, "target");
        if (auto caps = kv_find(kv, "caps")) {
            work.task.bid_spec.required_capabilities = payload::split_caps(*caps);
            if (auto mc = kv_find(kv, "max_cost")) {
                work.task.bid_spec.max_cost = parse_double(*mc, "max_cost");
            } else {
                work.task.bid_spec.max_cost.reset();
            }
        }
        work.task.revision = static_cast<std::uint32_t>(
            parse_u64(kv_require(kv, "revision"), "revision"));
        if (config_.progress_policy == ProgressPolicy::Reset) work.progress = 0.0;
        work.ticks_since_report = 0;
        if (on_retargeted) on_retargeted(work.task, now);
        return {factory_->make(work.conversation, id_, work.manager, Performative::ConfirmChange,
                               payload::change_confirm(tid, work.task.revision), now)};
    }

    std::vector<Envelope> on_cancel(const Envelope& env, LogicalTime now) {
        auto kv = kv_decode(env.payload);
        TaskId tid = kv_require(kv, "task");
        auto it = active_.find(tid);
        if (it == active_.end()) return {};
        Envelope ack = factory_->make(it->second.conversation, id_, it->second.manager,
                                      Performative::Inform, payload::cancel_ack(tid), now);
        active_.erase(it);
        if (on_released) on_released(tid, now);
        return {ack};
    }

    struct Pending {
        TaskSpec task;
        AgentId manager;
        std::string conversation;
        int attempt = 1;
    };

    AgentId id_;
    ContractorConfig config_;
    EnvelopeFactory* factory_;
    CostFn cost_fn_;
    std::map<TaskId, Pending> pending_;
    std::map<TaskId, ActiveContract> active_;
};

}  // namespace cnp
