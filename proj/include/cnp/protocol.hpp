#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cnp/core.hpp"

namespace cnp {

enum class ProtocolVariant {
    Conventional,  // in-flight change forces cancel + full re-announcement
    Updated,       // in-flight change is absorbed by the working contractor
};

inline std::string_view to_string(ProtocolVariant v) {
    return v == ProtocolVariant::Conventional ? "conventional" : "updated";
}

inline ProtocolVariant parse_variant(std::string_view name) {
    if (name == "conventional") return ProtocolVariant::Conventional;
    if (name == "updated") return ProtocolVariant::Updated;
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected conventional|updated)");
}

/// Constraints a contractor must satisfy to bid.
struct BidSpecification {
    std::set<std::string> required_capabilities;
    std::optional<double> max_cost;

    bool operator==(const BidSpecification&) const = default;
};

struct TaskSpec {
    TaskId task_id;
    std::string name;
    std::string abstraction;  // short human-readable summary of the work
    BidSpecification bid_spec;
    LogicalTime expiration = 0;  // bids delivered after this tick are ignored
    std::string target;          // scenario-defined payload, opaque here
    std::uint32_t revision = 0;  // bumped once per absorbed change

    bool operator==(const TaskSpec&) const = default;
};

struct Bid {
    TaskId task_id;
    AgentId contractor_id;
    double cost = 0.0;
    LogicalTime submitted_at = 0;

    bool operator==(const Bid&) const = default;
};

/// Ranked items, rank 1 first. ordering_key names the sort key used, so a
/// reader of dumped state can tell how the order arose.
template <typename Item>
struct RankedList {
    std::vector<std::pair<Item, int>> entries;
    std::string ordering_key;
};

enum class ContractState {
    Announced,
    Bidding,
    BidProcessing,
    Awarded,
    InProgress,
    Completed,
    Failed,
    Cancelled,
};

inline std::string_view to_string(ContractState s) {
    switch (s) {
        case ContractState::Announced: return "announced";
        case ContractState::Bidding: return "bidding";
        case ContractState::BidProcessing: return "bid-processing";
        case ContractState::Awarded: return "awarded";
        case ContractState::InProgress: return "in-progress";
        case ContractState::Completed: return "completed";
        case ContractState::Failed: return "failed";
        case ContractState::Cancelled: return "cancelled";
    }
    return "?";
}

struct InterimReport {
    TaskId task_id;
    AgentId contractor_id;
    double progress_fraction = 0.0;  // in [0, 1)
    std::uint32_t revision = 0;
    LogicalTime at = 0;

    bool operator==(const InterimReport&) const = default;
};

struct FinalReport {
    TaskId task_id;
    AgentId contractor_id;
    LogicalTime deadline = 0;  // the bid deadline the contract was let under
    LogicalTime completed_at = 0;
    std::uint32_t revision_completed = 0;

    bool operator==(const FinalReport&) const = default;
};

enum class ChangeOutcome {
    Absorbed,       // updated variant: contract kept, revision bumped
    ForcedRestart,  // conventional variant: cancel + re-announcement
    RejectedTooLate,
};

inline std::string_view to_string(ChangeOutcome o) {
    switch (o) {
        case ChangeOutcome::Absorbed: return "absorbed";
        case ChangeOutcome::ForcedRestart: return "forced-restart";
        case ChangeOutcome::RejectedTooLate: return "rejected-too-late";
    }
    return "?";
}

struct TaskChange {
    TaskId task_id;
    std::string new_target;
    std::optional<BidSpecification> new_bid_spec;
    LogicalTime requested_at = 0;
    ChangeOutcome outcome = ChangeOutcome::Absorbed;

    bool operator==(const TaskChange&) const = default;
};

/// Everything a manager tracks about one task's contract.
struct ContractRecord {
    TaskSpec task;
    ContractState state = ContractState::Announced;
    std::optional<AgentId> awarded_to;
    std::vector<Bid> bids_received;
    std::vector<InterimReport> interim_reports;
    std::optional<FinalReport> final_report;
    std::vector<TaskChange> change_log;
    std::uint32_t repetitions = 0;  // forced restarts so far
};

// ---------------------------------------------------------------------------
// Decision functions
// ---------------------------------------------------------------------------

/// May a contractor with these capabilities bid at this cost?
inline bool eligible(const BidSpecification& spec, const std::set<std::string>& capabilities,
                     double cost) {
    if (cost < 0.0) throw std::invalid_argument("eligible: cost must be non-negative");
    for (const auto& cap : spec.required_capabilities) {
        if (!capabilities.contains(cap)) return false;
    }
    return !spec.max_cost || cost <= *spec.max_cost;
}

/// Total order over bids: cheapest first, earlier submission breaks cost
/// ties, contractor id breaks the rest. With unique contractor ids the
/// order, and therefore the award, is fully deterministic.
inline bool bid_precedes(const Bid& a, const Bid& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.submitted_at != b.submitted_at) return a.submitted_at < b.submitted_at;
    return a.contractor_id < b.contractor_id;
}

inline RankedList<Bid> rank_bids(std::vector<Bid> bids) {
    for (const auto& bid : bids) {
        if (bid.task_id != bids.front().task_id) {
            throw std::invalid_argument("rank_bids: bids for different tasks");
        }
    }
    std::sort(bids.begin(), bids.end(), bid_precedes);
    RankedList<Bid> ranked;
    ranked.ordering_key = "cost,submitted_at,contractor_id";
    ranked.entries.reserve(bids.size());
    int rank = 1;
    for (auto& bid : bids) {
        ranked.entries.emplace_back(std::move(bid), rank++);
    }
    return ranked;
}

inline std::optional<AgentId> select_award(const RankedList<Bid>& ranked) {
    if (ranked.entries.empty()) return std::nullopt;
    return ranked.entries.front().first.contractor_id;
}

/// The exact legal transition relation. Everything not listed is illegal,
/// including self-loops; the one exception is the updated variant's
/// InProgress -> InProgress, which models an absorbed modification.
inline bool validate_transition(ContractState from, ContractState to, ProtocolVariant variant) {
    using S = ContractState;
    switch (from) {
        case S::Announced:
            return to == S::Bidding;
        case S::Bidding:
            return to == S::BidProcessing;
        case S::BidProcessing:
            return to == S::Awarded || to == S::Failed;
        case S::Awarded:
            return to == S::InProgress;
        case S::InProgress:
            if (to == S::Completed || to == S::Cancelled) return true;
            if (to == S::Announced) return variant == ProtocolVariant::Conventional;
            if (to == S::InProgress) return variant == ProtocolVariant::Updated;
            return false;
        case S::Completed:
        case S::Failed:
        case S::Cancelled:
            return false;
    }
    return false;
}

/// Applies a mid-execution change to a contract. The record must hold the
/// contract the change names. States other than Awarded / InProgress /
/// Completed indicate a caller bug.
inline ContractRecord apply_change(ContractRecord record, TaskChange change,
                                   ProtocolVariant variant, LogicalTime now) {
    if (change.task_id != record.task.task_id) {
        throw std::invalid_argument("apply_change: change names task '" + change.task_id +
                                    "' but record holds '" + record.task.task_id + "'");
    }
    change.requested_at = now;

    switch (record.state) {
        case ContractState::Completed:
            change.outcome = ChangeOutcome::RejectedTooLate;
            record.change_log.push_back(std::move(change));
            return record;
        case ContractState::Awarded:
        case ContractState::InProgress:
            break;
        default:
            throw std::logic_error("apply_change: contract is " +
                                   std::string(to_string(record.state)));
    }

    record.task.target = change.new_target;
    if (change.new_bid_spec) record.task.bid_spec = *change.new_bid_spec;

    if (variant == ProtocolVariant::Updated) {
        record.task.revision += 1;
        change.outcome = ChangeOutcome::Absorbed;
    } else {
        record.state = ContractState::Announced;
        record.awarded_to.reset();
        record.bids_received.clear();
        record.repetitions += 1;
        change.outcome = ChangeOutcome::ForcedRestart;
    }
    record.change_log.push_back(std::move(change));
    return record;
}

}  // namespace cnp
