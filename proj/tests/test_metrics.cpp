#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "cnp/metrics.hpp"

using namespace cnp;

namespace {

Envelope traced(const std::string& conversation, const std::string& msg_id) {
    Envelope env;
    env.msg_id = msg_id;
    env.conversation_id = conversation;
    env.sender = "a";
    env.receiver = "b";
    env.performative = Performative::Inform;
    env.dialect_keyword = "inform";
    return env;
}

ContractRecord synthetic_contract(const TaskId& tid, ContractState state) {
    ContractRecord record;
    record.task.task_id = tid;
    record.state = state;
    return record;
}

}  // namespace

TEST_CASE("summarize aggregates per conversation and per contract", "[metrics]") {
    std::vector<Envelope> trace = {
        traced("t1", "m1"), traced("t1", "m2"), traced("t1", "m3"),
        traced("t2", "m4"), traced("t2", "m5"),
        traced("t3", "m6"),
    };

    ContractRecord done = synthetic_contract("t1", ContractState::Completed);
    done.task.revision = 2;
    done.change_log.push_back(
        TaskChange{"t1", "x@1,1", std::nullopt, 10, ChangeOutcome::Absorbed});
    done.change_log.push_back(
        TaskChange{"t1", "x@2,2", std::nullopt, 20, ChangeOutcome::Absorbed});
    done.final_report = FinalReport{"t1", "c1", 4, 33, 2};

    ContractRecord restarted = synthetic_contract("t2", ContractState::Completed);
    restarted.repetitions = 2;
    restarted.change_log.push_back(
        TaskChange{"t2", "y@3,3", std::nullopt, 12, ChangeOutcome::ForcedRestart});
    restarted.change_log.push_back(
        TaskChange{"t2", "y@4,4", std::nullopt, 22, ChangeOutcome::ForcedRestart});
    restarted.final_report = FinalReport{"t2", "c2", 8, 41, 0};

    ContractRecord failed = synthetic_contract("t3", ContractState::Failed);
    ContractRecord silent = synthetic_contract("t4", ContractState::Cancelled);

    RunMeta meta{ProtocolVariant::Updated, "acl-f", 0xabcdef};
    ExperimentReport report = summarize(trace, {done, restarted, failed, silent}, 44, meta);

    CHECK(report.variant == ProtocolVariant::Updated);
    CHECK(report.dialect == "acl-f");
    CHECK(report.scenario_hash == 0xabcdef);
    CHECK(report.tasks_total == 4);
    CHECK(report.tasks_updated == 1);       // only t1 absorbed changes
    CHECK(report.task_repetitions == 2);    // both restarts on t2
    CHECK(report.message_count == 6);
    CHECK(report.elapsed_ticks == 44);

    REQUIRE(report.per_task.size() == 4);
    CHECK(report.per_task[0].task_id == "t1");
    CHECK(report.per_task[0].messages == 3);
    CHECK(report.per_task[0].changes_absorbed == 2);
    CHECK(report.per_task[0].revision == 2);
    CHECK(report.per_task[0].completed_at == LogicalTime(33));
    CHECK(report.per_task[1].messages == 2);
    CHECK(report.per_task[1].repetitions == 2);
    CHECK(report.per_task[1].changes_absorbed == 0);
    CHECK(report.per_task[2].final_state == ContractState::Failed);
    CHECK(report.per_task[2].messages == 1);
    CHECK(report.per_task[3].messages == 0);  // no traffic for t4 at all
    CHECK_FALSE(report.per_task[3].completed_at.has_value());
}

TEST_CASE("summarize of an empty run", "[metrics]") {
    ExperimentReport report =
        summarize({}, {}, 0, RunMeta{ProtocolVariant::Conventional, "acl-k", 7});
    CHECK(report.tasks_total == 0);
    CHECK(report.tasks_updated == 0);
    CHECK(report.task_repetitions == 0);
    CHECK(report.message_count == 0);
    CHECK(report.elapsed_ticks == 0);
    CHECK(report.per_task.empty());
}

namespace {

ExperimentReport stub_report(ProtocolVariant variant, std::uint64_t hash,
                             std::uint64_t messages, LogicalTime elapsed, int updated,
                             int repetitions) {
    ExperimentReport report;
    report.variant = variant;
    report.dialect = "acl-f";
    report.tasks_total = 5;
    report.tasks_updated = updated;
    report.task_repetitions = repetitions;
    report.message_count = messages;
    report.elapsed_ticks = elapsed;
    report.scenario_hash = hash;
    return report;
}

}  // namespace

TEST_CASE("compare takes (conventional, updated) on one scenario", "[metrics]") {
    ExperimentReport conventional =
        stub_report(ProtocolVariant::Conventional, 99, 93, 70, 0, 2);
    ExperimentReport updated = stub_report(ProtocolVariant::Updated, 99, 69, 58, 2, 0);

    ComparisonTable table = compare(conventional, updated);
    CHECK(table.tasks_total.delta == 0);
    CHECK(table.tasks_updated.delta == 2);
    CHECK(table.task_repetitions.delta == -2);
    CHECK(table.message_count.delta == -24);
    CHECK(table.elapsed_ticks.delta == -12);

    CHECK_THROWS_AS(compare(updated, conventional), std::invalid_argument);
    CHECK_THROWS_AS(compare(conventional, conventional), std::invalid_argument);

    ExperimentReport other_scenario = stub_report(ProtocolVariant::Updated, 98, 69, 58, 2, 0);
    CHECK_THROWS_AS(compare(conventional, other_scenario), std::invalid_argument);
}

TEST_CASE("csv header and rows are pinned", "[metrics]") {
    CHECK(kReportCsvHeader ==
          "variant,dialect,tasks_total,tasks_updated,task_repetitions,message_count,"
          "elapsed_ticks");

    ExperimentReport report = stub_report(ProtocolVariant::Updated, 1, 69, 58, 2, 0);
    CHECK(csv_row(report) == "updated,acl-f,5,2,0,69,58");

    ExperimentReport conv = stub_report(ProtocolVariant::Conventional, 1, 93, 70, 0, 2);
    conv.dialect = "acl-k";
    CHECK(csv_row(conv) == "conventional,acl-k,5,0,2,93,70");
}

TEST_CASE("comparison rows append updated-minus-conventional deltas", "[metrics]") {
    CHECK(kComparisonCsvHeader ==
          "variant,dialect,tasks_total,tasks_updated,task_repetitions,message_count,"
          "elapsed_ticks,tasks_total_delta,tasks_updated_delta,task_repetitions_delta,"
          "message_count_delta,elapsed_ticks_delta");

    ComparisonTable table = compare(stub_report(ProtocolVariant::Conventional, 5, 93, 70, 0, 2),
                                    stub_report(ProtocolVariant::Updated, 5, 69, 58, 2, 0));
    CHECK(comparison_csv_row(table) == "updated,acl-f,5,2,0,69,58,0,2,-2,-24,-12");
}
