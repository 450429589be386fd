#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "cnp/experiment.hpp"
#include "cnp/validator.hpp"

using namespace cnp;
using Catch::Matchers::ContainsSubstring;

namespace {

ValidationReport check(const std::string& text,
                       ProtocolVariant variant = ProtocolVariant::Updated,
                       DialectId dialect = DialectId::AclF) {
    return validate_trace_text(text, variant, dialect);
}

bool mentions(const ValidationReport& report, std::size_t line, std::string_view fragment) {
    for (const Violation& v : report.violations) {
        if (v.line == line && v.message.find(fragment) != std::string::npos) return true;
    }
    return false;
}

/// Minimal clean one-contractor auction, lines 1 through 4.
const std::string kCleanAuction =
    "m1|t1|m0|c1|cfp|0|1|task=t1,target=p@5%2C5,attempt=1\n"
    "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
    "m3|t1|m0|c1|accept-proposal|4|5|task=t1\n"
    "m4|t1|c1|m0|inform|9|10|task=t1,kind=final,deadline=4,completed=9,revision=0\n";

}  // namespace

TEST_CASE("generated traces replay without violations", "[validator]") {
    for (auto variant : {ProtocolVariant::Updated, ProtocolVariant::Conventional}) {
        for (auto dialect : {DialectId::AclF, DialectId::AclK}) {
            RunConfig cfg;
            cfg.variant = variant;
            cfg.dialect = dialect;
            RunResult run = run_experiment(cfg);
            ValidationReport report = check(run.trace_text, variant, dialect);
            INFO(cfg.header_line());
            CHECK(report.ok());
            CHECK(report.parse_failures == 0);
            CHECK(report.envelopes == run.report.message_count);
            CHECK(report.lines_checked == run.report.message_count);  // header skipped
        }
    }
}

TEST_CASE("a change racing the final report is legal", "[validator]") {
    // Seed 7 injects a change the very tick the final report goes out: the
    // request (or cancel) stays unanswered in the trace, which is fine
    // because completion voids it.
    RunConfig cfg;
    cfg.seed = 7;
    cfg.variant = ProtocolVariant::Updated;
    RunResult updated = run_experiment(cfg);
    REQUIRE(updated.changes.size() == 2);
    REQUIRE(updated.changes[1].outcome == ChangeOutcome::RejectedTooLate);
    CHECK(check(updated.trace_text, cfg.variant, cfg.dialect).ok());

    cfg.variant = ProtocolVariant::Conventional;
    RunResult conventional = run_experiment(cfg);
    REQUIRE(conventional.changes[1].outcome == ChangeOutcome::RejectedTooLate);
    CHECK(check(conventional.trace_text, cfg.variant, cfg.dialect).ok());
}

TEST_CASE("the clean fixture passes and every mutation is caught", "[validator]") {
    REQUIRE(check(kCleanAuction).ok());

    SECTION("conversation starting with a rejection") {
        ValidationReport report = check("m1|t1|m0|c1|reject-proposal|0|1|task=t1\n");
        CHECK(report.violations.size() == 2);
        CHECK(mentions(report, 1, "begins with a non-announcement message"));
        CHECK(mentions(report, 1, "rejection to 'c1', which was never called"));
    }

    SECTION("delivery stamped before the send") {
        ValidationReport report = check("m1|t1|m0|c1|cfp|5|3|task=t1,attempt=1\n");
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 1, "delivered_at 3 precedes sent_at 5"));
    }

    SECTION("trace falling out of send order") {
        ValidationReport report = check(
            "m1|t1|m0|c1|cfp|5|6|task=t1,attempt=1\n"
            "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n");
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 2, "trace is not in send order"));
    }

    SECTION("duplicate message id") {
        ValidationReport report = check(
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m1|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n");
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 2, "duplicate msg_id 'm1'"));
    }

    SECTION("keyword from the other dialect") {
        ValidationReport report = check("m1|t1|m0|c1|achieve|0|1|task=t1,attempt=1\n");
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 1, "keyword 'achieve' is not part of the acl-f vocabulary"));
    }

    SECTION("keyword in no dialect at all") {
        ValidationReport report = check("m1|t1|m0|c1|snuffle|0|1|task=t1\n");
        CHECK(report.parse_failures == 1);
        CHECK(report.envelopes == 0);
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 1, "parse:"));
        CHECK_THAT(report.violations[0].message, ContainsSubstring("snuffle"));
    }

    SECTION("announcement from a non-manager") {
        ValidationReport report = check(
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c9|c1|cfp|2|3|task=t1,attempt=1\n");
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 2, "announcement from 'c9', expected manager 'm0'"));
    }

    SECTION("bid from an agent that was never called") {
        ValidationReport report = check(
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c9|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n");
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 2, "bid from 'c9', which was never called"));
    }

    SECTION("award to an agent that never bid") {
        ValidationReport report = check(
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|m0|c2|accept-proposal|4|5|task=t1\n"
            "m3|t1|c2|m0|inform|9|10|task=t1,kind=final,deadline=4,completed=9,revision=0\n");
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 2, "award to 'c2', which did not bid this round"));
    }

    SECTION("conversation abandoned after the award") {
        std::string truncated =
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
            "m3|t1|m0|c1|accept-proposal|4|5|task=t1\n";
        ValidationReport report = check(truncated);
        CHECK(report.violations.size() == 1);
        CHECK(mentions(report, 3, "conversation 't1' left open (state awarded)"));
    }

    SECTION("cancellation ack with nothing to acknowledge") {
        std::string text =
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
            "m3|t1|m0|c1|accept-proposal|4|5|task=t1\n"
            "m4|t1|c1|m0|inform|6|7|task=t1,kind=cancel-ack\n";
        ValidationReport report = check(text, ProtocolVariant::Conventional);
        CHECK(mentions(report, 4, "cancellation ack without a pending cancel"));
        CHECK(mentions(report, 4, "left open (state awarded)"));
        CHECK(report.violations.size() == 2);
    }

    SECTION("confirmation with no change pending") {
        std::string text =
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
            "m3|t1|m0|c1|accept-proposal|4|5|task=t1\n"
            "m4|t1|c1|m0|confirm|6|7|task=t1,revision=1\n";
        ValidationReport report = check(text);
        CHECK(mentions(report, 4, "change confirmation without a pending request"));
        CHECK(mentions(report, 4, "left open (state awarded)"));
    }

    SECTION("inform of an unknown kind") {
        std::string text =
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
            "m3|t1|m0|c1|accept-proposal|4|5|task=t1\n"
            "m4|t1|c1|m0|inform|6|7|task=t1,kind=gossip\n";
        ValidationReport report = check(text);
        CHECK(mentions(report, 4, "inform with unknown kind 'gossip'"));
    }

    SECTION("cancel left unanswered at end of trace") {
        std::string text =
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
            "m3|t1|m0|c1|accept-proposal|4|5|task=t1\n"
            "m4|t1|m0|c1|cancel|6|7|task=t1\n";
        ValidationReport report = check(text, ProtocolVariant::Conventional);
        CHECK(mentions(report, 4, "ends with an unanswered cancel"));
        CHECK(mentions(report, 4, "left open (state in-progress)"));
    }

    SECTION("re-announcement while the cancel is still pending") {
        std::string text =
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
            "m3|t1|m0|c1|accept-proposal|4|5|task=t1\n"
            "m4|t1|m0|c1|cancel|6|7|task=t1\n"
            "m5|t1|m0|c1|cfp|8|9|task=t1,attempt=1\n";
        ValidationReport report = check(text, ProtocolVariant::Conventional);
        CHECK(mentions(report, 5, "re-announcement before the cancellation was acknowledged"));
    }

    SECTION("change request while still bidding") {
        std::string text =
            "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\n"
            "m2|t1|m0|c1|request|2|3|task=t1,target=p@6%2C6,revision=1\n";
        ValidationReport report = check(text);
        CHECK(mentions(report, 2, "change request while bidding"));
    }
}

TEST_CASE("variant vocabulary is enforced both ways", "[validator]") {
    RunConfig cfg;
    cfg.variant = ProtocolVariant::Updated;
    RunResult updated = run_experiment(cfg);
    cfg.variant = ProtocolVariant::Conventional;
    RunResult conventional = run_experiment(cfg);

    SECTION("an updated trace is not a legal conventional trace") {
        ValidationReport report = check(updated.trace_text, ProtocolVariant::Conventional);
        CHECK_FALSE(report.ok());
        bool request_flagged = false;
        bool confirm_flagged = false;
        for (const Violation& v : report.violations) {
            if (v.message.find("in-flight change request under the conventional variant") !=
                std::string::npos) {
                request_flagged = true;
            }
            if (v.message.find("change confirmation under the conventional variant") !=
                std::string::npos) {
                confirm_flagged = true;
            }
        }
        CHECK(request_flagged);
        CHECK(confirm_flagged);
    }

    SECTION("a conventional trace is not a legal updated trace") {
        ValidationReport report = check(conventional.trace_text, ProtocolVariant::Updated);
        CHECK_FALSE(report.ok());
        bool cancel_flagged = false;
        bool restart_flagged = false;
        for (const Violation& v : report.violations) {
            if (v.message.find("cancellation under the updated variant") != std::string::npos) {
                cancel_flagged = true;
            }
            if (v.message.find("illegal transition in-progress -> announced") !=
                std::string::npos) {
                restart_flagged = true;
            }
        }
        CHECK(cancel_flagged);
        CHECK(restart_flagged);
    }

    SECTION("a whole trace in the wrong dialect flags every line") {
        cfg.variant = ProtocolVariant::Updated;
        cfg.dialect = DialectId::AclK;
        RunResult kqml = run_experiment(cfg);
        ValidationReport report = check(kqml.trace_text, ProtocolVariant::Updated,
                                        DialectId::AclF);
        CHECK(report.violations.size() == kqml.report.message_count);
        for (const Violation& v : report.violations) {
            CHECK_THAT(v.message, ContainsSubstring("is not part of the acl-f vocabulary"));
        }
    }

    SECTION("truncating a real trace after an award leaves it open") {
        std::size_t award = updated.trace_text.find("|accept-proposal|");
        REQUIRE(award != std::string::npos);
        std::size_t cut = updated.trace_text.find('\n', award);
        REQUIRE(cut != std::string::npos);
        ValidationReport report = check(updated.trace_text.substr(0, cut + 1));
        REQUIRE(report.violations.size() == 1);
        CHECK_THAT(report.violations[0].message,
                   ContainsSubstring("conversation 't1' left open (state awarded)"));
    }
}

TEST_CASE("validate_text skips headers and keeps original line numbers", "[validator]") {
    std::string text =
        "# config: variant=updated dialect=acl-f tasks=1 changes=0 contractors=1 grid=10x10 "
        "seed=1 latency=1:0 retry_budget=2 report_interval=5 progress_policy=reset "
        "expiration_window=4 work_ticks=5 max_ticks=100000\n"
        "\n"
        "m1|t1|m0|c1|cfp|0|1|task=t1,attempt=1\r\n"
        "# mid-trace comment\n"
        "m2|t1|c1|m0|propose|1|2|task=t1,cost=8,submitted=1,attempt=1\n"
        "m2|t1|m0|c1|accept-proposal|4|5|task=t1\n"
        "m3|t1|c1|m0|inform|9|10|task=t1,kind=final,deadline=4,completed=9,revision=0\n";
    ValidationReport report = check(text);
    CHECK(report.lines_checked == 4);  // header, blank, and comment all skipped
    CHECK(report.envelopes == 4);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].line == 6);  // numbering counts the skipped lines
    CHECK_THAT(report.violations[0].message, ContainsSubstring("duplicate msg_id 'm2'"));
}
