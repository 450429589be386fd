#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cnp/core.hpp"
#include "cnp/messaging.hpp"
#include "cnp/protocol.hpp"

namespace cnp {

struct PerTaskStats {
    TaskId task_id;
    ContractState final_state = ContractState::Announced;
    std::uint32_t revision = 0;
    std::uint32_t repetitions = 0;
    int changes_absorbed = 0;
    std::uint64_t messages = 0;
    std::optional<LogicalTime> completed_at;
};

/// The three comparison quantities plus enough context to interpret them.
/// tasks_updated counts contracts whose change was absorbed in flight;
/// task_repetitions sums forced re-announcements.
struct ExperimentReport {
    ProtocolVariant variant = ProtocolVariant::Conventional;
    std::string dialect;
    int tasks_total = 0;
    int tasks_updated = 0;
    int task_repetitions = 0;
    std::uint64_t message_count = 0;
    LogicalTime elapsed_ticks = 0;
    std::uint64_t scenario_hash = 0;
    std::vector<PerTaskStats> per_task;
};

struct RunMeta {
    ProtocolVariant variant = ProtocolVariant::Conventional;
    std::string dialect;
    std::uint64_t scenario_hash = 0;
};

inline ExperimentReport summarize(const std::vector<Envelope>& trace,
                                  const std::vector<ContractRecord>& contracts,
                                  LogicalTime final_clock, const RunMeta& meta) {
    ExperimentReport report;
    report.variant = meta.variant;
    report.dialect = meta.dialect;
    report.scenario_hash = meta.scenario_hash;
    report.tasks_total = static_cast<int>(contracts.size());
    report.message_count = trace.size();
    report.elapsed_ticks = final_clock;

    std::map<std::string, std::uint64_t> per_conversation;
    for (const Envelope& env : trace) per_conversation[env.conversation_id] += 1;

    for (const ContractRecord& record : contracts) {
        PerTaskStats stats;
        stats.task_id = record.task.task_id;
        stats.final_state = record.state;
        stats.revision = record.task.revision;
        stats.repetitions = record.repetitions;
        for (const TaskChange& change : record.change_log) {
            if (change.outcome == ChangeOutcome::Absorbed) stats.changes_absorbed += 1;
        }
        if (auto it = per_conversation.find(record.task.task_id); it != per_conversation.end()) {
            stats.messages = it->second;
        }
        if (record.final_report) stats.completed_at = record.final_report->completed_at;

        if (stats.changes_absorbed > 0) report.tasks_updated += 1;
        report.task_repetitions += static_cast<int>(record.repetitions);
        report.per_task.push_back(std::move(stats));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct MetricDelta {
    long long delta = 0;  // updated minus conventional
};

/// Same-scenario pairing of a conventional run and an updated run.
struct ComparisonTable {
    ExperimentReport conventional;
    ExperimentReport updated;
    MetricDelta tasks_total;
    MetricDelta tasks_updated;
    MetricDelta task_repetitions;
    MetricDelta message_count;
    MetricDelta elapsed_ticks;
};

inline ComparisonTable compare(const ExperimentReport& conventional,
                               const ExperimentReport& updated) {
    if (conventional.variant != ProtocolVariant::Conventional ||
        updated.variant != ProtocolVariant::Updated) {
        throw std::invalid_argument("compare: expects (conventional, updated) in that order");
    }
    if (conventional.scenario_hash != updated.scenario_hash) {
        throw std::invalid_argument("compare: reports describe different scenarios");
    }
    ComparisonTable table;
    table.conventional = conventional;
    table.updated = updated;
    auto diff = [](auto u, auto c) {
        return MetricDelta{static_cast<long long>(u) - static_cast<long long>(c)};
    };
    table.tasks_total = diff(updated.tasks_total, conventional.tasks_total);
    table.tasks_updated = diff(updated.tasks_updated, conventional.tasks_updated);
    table.task_repetitions = diff(updated.task_repetitions, conventional.task_repetitions);
    table.message_count = diff(updated.message_count, conventional.message_count);
    table.elapsed_ticks = diff(updated.elapsed_ticks, conventional.elapsed_ticks);
    return table;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kReportCsvHeader =
    "variant,dialect,tasks_total,tasks_updated,task_repetitions,message_count,elapsed_ticks";

inline std::string csv_row(const ExperimentReport& r) {
    std::string row;
    row += to_string(r.variant);
    row += ',';
    row += r.dialect;
    row += ',';
    row += std::to_string(r.tasks_total);
    row += ',';
    row += std::to_string(r.tasks_updated);
    row += ',';
    row += std::to_string(r.task_repetitions);
    row += ',';
    row += std::to_string(r.message_count);
    row += ',';
    row += std::to_string(r.elapsed_ticks);
    return row;
}

inline constexpr std::string_view kComparisonCsvHeader =
    "variant,dialect,tasks_total,tasks_updated,task_repetitions,message_count,elapsed_ticks,"
    "tasks_total_delta,tasks_updated_delta,task_repetitions_delta,message_count_delta,"
    "elapsed_ticks_delta";

/// One comparison row: the updated run's metrics plus updated-minus-
/// conventional deltas.
inline std::string comparison_csv_row(const ComparisonTable& t) {
    std::string row = csv_row(t.updated);
    row += ',';
    row += std::to_string(t.tasks_total.delta);
    row += ',';
    row += std::to_string(t.tasks_updated.delta);
    row += ',';
    row += std::to_string(t.task_repetitions.delta);
    row += ',';
    row += std::to_string(t.message_count.delta);
    row += ',';
    row += std::to_string(t.elapsed_ticks.delta);
    return row;
}

}  // namespace cnp
