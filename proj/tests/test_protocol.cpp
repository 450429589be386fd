#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "cnp/protocol.hpp"

using namespace cnp;

namespace {

Bid make_bid(const std::string& contractor, double cost, LogicalTime submitted = 0,
             const std::string& task = "t1") {
    return Bid{task, contractor, cost, submitted};
}

// Independent ordering oracle: selection of the minimum under an explicitly
// spelled-out key, repeated. Deliberately not a sort call.
std::vector<Bid> oracle_order(std::vector<Bid> bids) {
    std::vector<Bid> out;
    while (!bids.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < bids.size(); ++i) {
            const Bid& a = bids[i];
            const Bid& b = bids[best];
            bool better = false;
            if (a.cost < b.cost) {
                better = true;
            } else if (a.cost == b.cost) {
                if (a.submitted_at < b.submitted_at) {
                    better = true;
                } else if (a.submitted_at == b.submitted_at &&
                           a.contractor_id < b.contractor_id) {
                    better = true;
                }
            }
            if (better) best = i;
        }
        out.push_back(bids[best]);
        bids.erase(bids.begin() + static_cast<long>(best));
    }
    return out;
}

}  // namespace

TEST_CASE("eligibility follows capabilities and the inclusive cost ceiling", "[protocol]") {
    BidSpecification spec;
    spec.required_capabilities = {"chase"};
    spec.max_cost = 10.0;

    CHECK(eligible(spec, {"chase", "scout"}, 7.0));
    CHECK_FALSE(eligible(BidSpecification{{"chase"}, std::nullopt}, {"scout"}, 0.0));
    CHECK(eligible(BidSpecification{{}, 5.0}, {}, 5.0));  // boundary is inclusive
    CHECK_FALSE(eligible(BidSpecification{{}, 5.0}, {}, 5.001));
    CHECK(eligible(BidSpecification{{}, std::nullopt}, {}, 1e9));
    CHECK_FALSE(eligible(BidSpecification{{"a", "b"}, std::nullopt}, {"a"}, 0.0));
    CHECK(eligible(BidSpecification{{"a", "b"}, std::nullopt}, {"a", "b", "c"}, 0.0));
    CHECK_THROWS_AS(eligible(spec, {"chase"}, -0.5), std::invalid_argument);
}

TEST_CASE("rank_bids sorts ascending by cost", "[protocol]") {
    auto ranked = rank_bids({make_bid("c1", 4), make_bid("c2", 2), make_bid("c3", 9)});
    REQUIRE(ranked.entries.size() == 3);
    CHECK(ranked.entries[0].first.contractor_id == "c2");
    CHECK(ranked.entries[1].first.contractor_id == "c1");
    CHECK(ranked.entries[2].first.contractor_id == "c3");
    CHECK(ranked.entries[0].second == 1);
    CHECK(ranked.entries[1].second == 2);
    CHECK(ranked.entries[2].second == 3);
    CHECK(ranked.ordering_key == "cost,submitted_at,contractor_id");
}

TEST_CASE("rank_bids breaks cost ties by submission time then id", "[protocol]") {
    auto ranked = rank_bids({make_bid("c1", 3, 5), make_bid("c2", 3, 4)});
    REQUIRE(ranked.entries.size() == 2);
    CHECK(ranked.entries[0].first.contractor_id == "c2");

    auto same_time = rank_bids({make_bid("zeta", 3, 4), make_bid("alpha", 3, 4)});
    CHECK(same_time.entries[0].first.contractor_id == "alpha");
}

TEST_CASE("rank_bids matches the oracle over all permutations of up to 4 bids",
          "[protocol]") {
    // Includes duplicate costs and duplicate (cost, time) pairs to exercise
    // every tie-break level.
    const std::vector<Bid> pool = {
        make_bid("c1", 2.0, 4),
        make_bid("c2", 2.0, 3),
        make_bid("c3", 2.0, 3),
        make_bid("c4", 1.0, 9),
    };

    for (std::size_t size = 0; size <= pool.size(); ++size) {
        std::vector<std::size_t> index(size);
        for (std::size_t i = 0; i < size; ++i) index[i] = i;
        // Walk every permutation of the first `size` bids.
        std::sort(index.begin(), index.end());
        do {
            std::vector<Bid> input;
            for (std::size_t i : index) input.push_back(pool[i]);
            std::vector<Bid> expected = oracle_order(input);
            auto ranked = rank_bids(input);
            REQUIRE(ranked.entries.size() == expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i) {
                CAPTURE(size, i);
                CHECK(ranked.entries[i].first == expected[i]);
                CHECK(ranked.entries[i].second == static_cast<int>(i) + 1);
            }
        } while (std::next_permutation(index.begin(), index.end()));
    }
}

TEST_CASE("rank_bids is permutation invariant", "[protocol]") {
    std::vector<Bid> bids = {make_bid("a", 5, 1), make_bid("b", 5, 1), make_bid("c", 1, 2),
                             make_bid("d", 3, 0)};
    auto baseline = rank_bids(bids);
    std::sort(bids.begin(), bids.end(), [](const Bid& x, const Bid& y) {
        return x.contractor_id > y.contractor_id;
    });
    auto permuted = rank_bids(bids);
    REQUIRE(baseline.entries.size() == permuted.entries.size());
    for (std::size_t i = 0; i < baseline.entries.size(); ++i) {
        CHECK(baseline.entries[i].first == permuted.entries[i].first);
    }
}

TEST_CASE("rank_bids rejects mixed tasks and accepts empty input", "[protocol]") {
    CHECK(rank_bids({}).entries.empty());
    CHECK_THROWS_AS(rank_bids({make_bid("c1", 1, 0, "t1"), make_bid("c2", 1, 0, "t2")}),
                    std::invalid_argument);
}

TEST_CASE("select_award takes the head of the ranking", "[protocol]") {
    CHECK_FALSE(select_award(RankedList<Bid>{}).has_value());
    auto one = rank_bids({make_bid("c7", 3)});
    CHECK(select_award(one) == AgentId("c7"));
    auto many = rank_bids({make_bid("c1", 4), make_bid("c2", 2), make_bid("c3", 9)});
    CHECK(select_award(many) == AgentId("c2"));
}

TEST_CASE("validate_transition admits exactly the legal relation", "[protocol]") {
    using S = ContractState;
    const std::vector<S> all = {S::Announced, S::Bidding,   S::BidProcessing, S::Awarded,
                                S::InProgress, S::Completed, S::Failed,        S::Cancelled};

    // The full legal relation, spelled out pair by pair.
    std::set<std::pair<S, S>> legal_common = {
        {S::Announced, S::Bidding},   {S::Bidding, S::BidProcessing},
        {S::BidProcessing, S::Awarded}, {S::BidProcessing, S::Failed},
        {S::Awarded, S::InProgress},  {S::InProgress, S::Completed},
        {S::InProgress, S::Cancelled},
    };

    for (ProtocolVariant variant : {ProtocolVariant::Conventional, ProtocolVariant::Updated}) {
        std::set<std::pair<S, S>> legal = legal_common;
        if (variant == ProtocolVariant::Conventional) {
            legal.insert({S::InProgress, S::Announced});
        } else {
            legal.insert({S::InProgress, S::InProgress});
        }
        for (S from : all) {
            for (S to : all) {
                CAPTURE(to_string(from), to_string(to),
                        variant == ProtocolVariant::Updated ? "updated" : "conventional");
                CHECK(validate_transition(from, to, variant) == legal.contains({from, to}));
            }
        }
    }
}

TEST_CASE("validate_transition spec spot checks", "[protocol]") {
    CHECK(validate_transition(ContractState::Awarded, ContractState::InProgress,
                              ProtocolVariant::Conventional));
    CHECK(validate_transition(ContractState::Awarded, ContractState::InProgress,
                              ProtocolVariant::Updated));
    CHECK_FALSE(validate_transition(ContractState::InProgress, ContractState::Announced,
                                    ProtocolVariant::Updated));
    CHECK(validate_transition(ContractState::InProgress, ContractState::Announced,
                              ProtocolVariant::Conventional));
}

namespace {

ContractRecord in_progress_record() {
    ContractRecord record;
    record.task.task_id = "t1";
    record.task.name = "pursue";
    record.task.target = "prey-1@5,5";
    record.task.revision = 0;
    record.state = ContractState::InProgress;
    record.awarded_to = "c2";
    record.bids_received = {Bid{"t1", "c1", 4, 1}, Bid{"t1", "c2", 2, 1}};
    return record;
}

TaskChange change_to(const std::string& target) {
    TaskChange change;
    change.task_id = "t1";
    change.new_target = target;
    return change;
}

}  // namespace

TEST_CASE("apply_change absorbs under the updated variant", "[protocol]") {
    ContractRecord record = in_progress_record();
    ContractRecord next = apply_change(record, change_to("prey-3@1,2"), ProtocolVariant::Updated, 17);

    CHECK(next.state == ContractState::InProgress);
    CHECK(next.task.revision == 1);
    CHECK(next.task.target == "prey-3@1,2");
    CHECK(next.awarded_to == AgentId("c2"));
    CHECK(next.repetitions == 0);
    CHECK(next.bids_received == record.bids_received);  // bid history untouched
    REQUIRE(next.change_log.size() == 1);
    CHECK(next.change_log[0].outcome == ChangeOutcome::Absorbed);
    CHECK(next.change_log[0].requested_at == 17);

    // A second absorbed change bumps the revision by exactly one again.
    ContractRecord third = apply_change(next, change_to("prey-0@0,0"), ProtocolVariant::Updated, 21);
    CHECK(third.task.revision == 2);
    CHECK(third.change_log.size() == 2);
}

TEST_CASE("apply_change forces a restart under the conventional variant", "[protocol]") {
    ContractRecord next =
        apply_change(in_progress_record(), change_to("prey-3@1,2"), ProtocolVariant::Conventional, 9);

    CHECK(next.state == ContractState::Announced);
    CHECK(next.repetitions == 1);
    CHECK_FALSE(next.awarded_to.has_value());
    CHECK(next.bids_received.empty());
    CHECK(next.task.target == "prey-3@1,2");
    CHECK(next.task.revision == 0);  // revision only grows on absorbed changes
    REQUIRE(next.change_log.size() == 1);
    CHECK(next.change_log[0].outcome == ChangeOutcome::ForcedRestart);
}

TEST_CASE("apply_change while Awarded behaves like InProgress", "[protocol]") {
    ContractRecord record = in_progress_record();
    record.state = ContractState::Awarded;

    ContractRecord updated = apply_change(record, change_to("x@0,0"), ProtocolVariant::Updated, 3);
    CHECK(updated.state == ContractState::Awarded);
    CHECK(updated.task.revision == 1);

    ContractRecord conv = apply_change(record, change_to("x@0,0"), ProtocolVariant::Conventional, 3);
    CHECK(conv.state == ContractState::Announced);
    CHECK(conv.repetitions == 1);
}

TEST_CASE("apply_change after completion is rejected too late", "[protocol]") {
    ContractRecord record = in_progress_record();
    record.state = ContractState::Completed;

    for (ProtocolVariant variant : {ProtocolVariant::Conventional, ProtocolVariant::Updated}) {
        ContractRecord next = apply_change(record, change_to("prey-3@1,2"), variant, 40);
        CHECK(next.state == ContractState::Completed);
        CHECK(next.task.target == record.task.target);
        CHECK(next.task.revision == record.task.revision);
        CHECK(next.awarded_to == record.awarded_to);
        CHECK(next.repetitions == 0);
        REQUIRE(next.change_log.size() == 1);
        CHECK(next.change_log[0].outcome == ChangeOutcome::RejectedTooLate);
    }
}

TEST_CASE("apply_change rejects caller bugs", "[protocol]") {
    ContractRecord record = in_progress_record();
    TaskChange wrong_task = change_to("prey-3@1,2");
    wrong_task.task_id = "t9";
    CHECK_THROWS_AS(apply_change(record, wrong_task, ProtocolVariant::Updated, 1),
                    std::invalid_argument);

    record.state = ContractState::Bidding;
    CHECK_THROWS_AS(apply_change(record, change_to("x@0,0"), ProtocolVariant::Updated, 1),
                    std::logic_error);
}
