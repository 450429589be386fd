#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cnp/core.hpp"
#include "cnp/messaging.hpp"
#include "cnp/protocol.hpp"

namespace cnp {

struct Violation {
    std::size_t line = 0;  // 1-based line in the input
    std::string message;
};

struct ValidationReport {
    std::size_t lines_checked = 0;
    std::size_t envelopes = 0;
    std::size_t parse_failures = 0;
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
};

/// Replays a trace against the protocol rules for the given variant and
/// dialect: per-conversation state machine conformance (via the exact
/// transition relation), role consistency, timestamp sanity, message id
/// uniqueness, and vocabulary purity. Lines that fail to decode are
/// reported and skipped.
///
/// A conversation may end while still collecting bids (an auction that
/// never filled looks identical to one truncated before its deadline), but
/// a conversation abandoned after an award is a violation.
class TraceValidator {
public:
    TraceValidator(ProtocolVariant variant, DialectId dialect)
        : variant_(variant), dialect_(dialect) {}

    /// Lines as (line number, text), header/comment lines already removed.
    ValidationReport validate(const std::vector<std::pair<std::size_t, std::string>>& lines) {
        report_ = ValidationReport{};
        conversations_.clear();
        seen_msg_ids_.clear();
        last_sent_ = 0;

        for (const auto& [line_no, text] : lines) {
            report_.lines_checked += 1;
            Envelope env;
            try {
                env = decode(text);
            } catch (const Error& e) {
                report_.parse_failures += 1;
                add(line_no, std::string("parse: ") + e.what());
                continue;
            }
            report_.envelopes += 1;
            check_envelope(line_no, env);
        }
        check_eof();
        return report_;
    }

    /// Convenience: whole trace text, with '#' lines and blanks skipped.
    ValidationReport validate_text(const std::string& text) {
        std::vector<std::pair<std::size_t, std::string>> lines;
        std::istringstream in(text);
        std::string raw;
        std::size_t line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            if (raw.empty() || raw.front() == '#') continue;
            lines.emplace_back(line_no, raw);
        }
        return validate(lines);
    }

private:
    struct Conversation {
        bool started = false;
        ContractState state = ContractState::Announced;
        AgentId manager;
        std::optional<AgentId> awarded_to;
        std::set<AgentId> called;   // everyone who ever received this CFP
        std::set<AgentId> bidders;  // proposers in the current round
        int attempt = 0;
        bool cancel_outstanding = false;
        bool change_outstanding = false;
        std::size_t last_line = 0;
    };

    void add(std::size_t line, std::string message) {
        report_.violations.push_back(Violation{line, std::move(message)});
    }

    /// Applies a state transition, reporting it when the exact relation
    /// forbids it. The state advances regardless so one defect does not
    /// cascade into noise.
    void step(std::size_t line, Conversation& conv, ContractState to) {
        if (!validate_transition(conv.state, to, variant_)) {
            add(line, "illegal transition " + std::string(to_string(conv.state)) + " -> " +
                          std::string(to_string(to)));
        }
        conv.state = to;
    }

    std::optional<int> payload_attempt(const Envelope& env) {
        try {
            auto kv = kv_decode(env.payload);
            if (auto a = kv_find(kv, "attempt")) return static_cast<int>(parse_u64(*a, "attempt"));
        } catch (const Error&) {
        }
        return std::nullopt;
    }

    std::optional<std::string> payload_kind(const Envelope& env) {
        try {
            auto kv = kv_decode(env.payload);
            return kv_find(kv, "kind");
        } catch (const Error& ) {
            return std::nullopt;
        }
    }

    void check_envelope(std::size_t line, const Envelope& env) {
        if (env.delivered_at < env.sent_at) {
            add(line, "delivered_at " + std::to_string(env.delivered_at) + " precedes sent_at " +
                          std::to_string(env.sent_at));
        }
        if (env.sent_at < last_sent_) {
            add(line, "trace is not in send order");
        }
        last_sent_ = std::max(last_sent_, env.sent_at);

        if (!seen_msg_ids_.insert(env.msg_id).second) {
            add(line, "duplicate msg_id '" + env.msg_id + "'");
        }

        const Dialect& expected = Dialect::get(dialect_);
        if (expected.keyword(env.performative) != env.dialect_keyword) {
            add(line, "keyword '" + env.dialect_keyword + "' is not part of the " +
                          std::string(expected.name()) + " vocabulary");
        }

        Conversation& conv = conversations_[env.conversation_id];
        conv.last_line = line;

        if (!conv.started && env.performative != Performative::CallForProposals) {
            add(line, "conversation '" + env.conversation_id +
                          "' begins with a non-announcement message");
            // Adopt the sender as manager so follow-on checks stay quiet.
            conv.started = true;
            conv.manager = env.sender;
            conv.state = ContractState::Bidding;
        }

        switch (env.performative) {
            case Performative::CallForProposals: return on_cfp(line, conv, env);
            case Performative::Propose: return on_propose(line, conv, env);
            case Performative::Refuse: return on_refuse(line, conv, env);
            case Performative::AcceptProposal: return on_accept(line, conv, env);
            case Performative::RejectProposal: return on_reject(line, conv, env);
            case Performative::Inform: return on_inform(line, conv, env);
            case Performative::RequestChange: return on_request_change(line, conv, env);
            case Performative::ConfirmChange: return on_confirm_change(line, conv, env);
            case Performative::Cancel: return on_cancel(line, conv, env);
            case Performative::Failure: return on_failure(line, conv, env);
        }
    }

    void on_cfp(std::size_t line, Conversation& conv, const Envelope& env) {
        if (!conv.started) {
            conv.started = true;
            conv.manager = env.sender;
            step(line, conv, ContractState::Bidding);
            conv.attempt = payload_attempt(env).value_or(1);
        } else {
            if (env.sender != conv.manager) {
                add(line, "announcement from '" + env.sender + "', expected manager '" +
                              conv.manager + "'");
            }
            int attempt = payload_attempt(env).value_or(conv.attempt);
            if (conv.state == ContractState::InProgress) {
                // Re-announcement after a forced restart.
                if (conv.cancel_outstanding) {
                    add(line, "re-announcement before the cancellation was acknowledged");
                }
                step(line, conv, ContractState::Announced);
                step(line, conv, ContractState::Bidding);
                conv.awarded_to.reset();
                conv.bidders.clear();
                conv.attempt = attempt;
            } else if (conv.state == ContractState::Bidding) {
                if (attempt != conv.attempt) {
                    // Retry round after an empty auction.
                    conv.bidders.clear();
                    conv.attempt = attempt;
                }
            } else {
                step(line, conv, ContractState::Bidding);
            }
        }
        conv.called.insert(env.receiver);
    }

    void on_propose(std::size_t line, Conversation& conv, const Envelope& env) {
        if (!conv.called.contains(env.sender)) {
            add(line, "bid from '" + env.sender + "', which was never called");
        }
        if (env.receiver != conv.manager) {
            add(line, "bid addressed to '" + env.receiver + "', not the manager");
        }
        if (payload_attempt(env).value_or(conv.attempt) == conv.attempt &&
            conv.state == ContractState::Bidding) {
            conv.bidders.insert(env.sender);
        }
        // A bid landing after the award is legal and simply ignored.
    }

    void on_refuse(std::size_t line, Conversation& conv, const Envelope& env) {
        if (!conv.called.contains(env.sender)) {
            add(line, "refusal from '" + env.sender + "', which was never called");
        }
        if (env.receiver != conv.manager) {
            add(line, "refusal addressed to '" + env.receiver + "', not the manager");
        }
    }

    void on_accept(std::size_t line, Conversation& conv, const Envelope& env) {
        if (env.sender != conv.manager) {
            add(line, "award from '" + env.sender + "', expected manager '" + conv.manager + "'");
        }
        if (!conv.bidders.contains(env.receiver)) {
            add(line, "award to '" + env.receiver + "', which did not bid this round");
        }
        step(line, conv, ContractState::BidProcessing);
        step(line, conv, ContractState::Awarded);
        conv.awarded_to = env.receiver;
    }

    void on_reject(std::size_t line, Conversation& conv, const Envelope& env) {
        if (env.sender != conv.manager) {
            add(line, "rejection from '" + env.sender + "', expected manager '" + conv.manager +
                          "'");
        }
        if (!conv.bidders.contains(env.receiver) && !conv.called.contains(env.receiver)) {
            add(line, "rejection to '" + env.receiver + "', which was never called");
        }
    }

    void require_worker(std::size_t line, Conversation& conv, const Envelope& env,
                        std::string_view what) {
        if (!conv.awarded_to || env.sender != *conv.awarded_to) {
            add(line, std::string(what) + " from '" + env.sender +
                          "', which does not hold the contract");
        }
    }

    void on_inform(std::size_t line, Conversation& conv, const Envelope& env) {
        std::string kind = payload_kind(env).value_or("interim");
        if (kind == "interim") {
            require_worker(line, conv, env, "progress report");
            if (conv.state == ContractState::Awarded) step(line, conv, ContractState::InProgress);
            if (conv.state != ContractState::InProgress) {
                add(line, "progress report while " + std::string(to_string(conv.state)));
            }
        } else if (kind == "final") {
            require_worker(line, conv, env, "final report");
            if (conv.state == ContractState::Awarded) step(line, conv, ContractState::InProgress);
            step(line, conv, ContractState::Completed);
            // Completion voids any change or cancel still in flight: the
            // request raced the final report and lost.
            conv.cancel_outstanding = false;
            conv.change_outstanding = false;
        } else if (kind == "cancel-ack") {
            require_worker(line, conv, env, "cancellation ack");
            if (!conv.cancel_outstanding) {
                add(line, "cancellation ack without a pending cancel");
            }
            conv.cancel_outstanding = false;
        } else {
            add(line, "inform with unknown kind '" + kind + "'");
        }
    }

    void on_request_change(std::size_t line, Conversation& conv, const Envelope& env) {
        if (variant_ != ProtocolVariant::Updated) {
            add(line, "in-flight change request under the conventional variant");
        }
        if (env.sender != conv.manager) {
            add(line, "change request from '" + env.sender + "', expected manager");
        }
        if (conv.awarded_to && env.receiver != *conv.awarded_to) {
            add(line, "change request to '" + env.receiver + "', which does not hold the contract");
        }
        if (conv.state == ContractState::Awarded) step(line, conv, ContractState::InProgress);
        if (conv.state == ContractState::InProgress) {
            step(line, conv, ContractState::InProgress);  // the modification self-loop
        } else {
            add(line, "change request while " + std::string(to_string(conv.state)));
        }
        conv.change_outstanding = true;
    }

    void on_confirm_change(std::size_t line, Conversation& conv, const Envelope& env) {
        if (variant_ != ProtocolVariant::Updated) {
            add(line, "change confirmation under the conventional variant");
        }
        require_worker(line, conv, env, "change confirmation");
        if (!conv.change_outstanding) {
            add(line, "change confirmation without a pending request");
        }
        conv.change_outstanding = false;
    }

    void on_cancel(std::size_t line, Conversation& conv, const Envelope& env) {
        if (variant_ != ProtocolVariant::Conventional) {
            add(line, "cancellation under the updated variant");
        }
        if (env.sender != conv.manager) {
            add(line, "cancellation from '" + env.sender + "', expected manager");
        }
        if (conv.awarded_to && env.receiver != *conv.awarded_to) {
            add(line, "cancellation to '" + env.receiver + "', which does not hold the contract");
        }
        if (conv.state == ContractState::Awarded) step(line, conv, ContractState::InProgress);
        if (conv.state != ContractState::InProgress) {
            add(line, "cancellation while " + std::string(to_string(conv.state)));
        }
        conv.cancel_outstanding = true;
    }

    void on_failure(std::size_t line, Conversation& conv, const Envelope& env) {
        require_worker(line, conv, env, "failure report");
        if (conv.state == ContractState::Awarded) step(line, conv, ContractState::InProgress);
        step(line, conv, ContractState::Cancelled);
        conv.awarded_to.reset();
        // Failure is terminal for the contract, so any change or cancel
        // still in flight dies with it.
        conv.cancel_outstanding = false;
        conv.change_outstanding = false;
    }

    void check_eof() {
        for (const auto& [cid, conv] : conversations_) {
            bool open = conv.state == ContractState::Awarded ||
                        conv.state == ContractState::InProgress ||
                        conv.state == ContractState::BidProcessing;
            if (open) {
                add(conv.last_line, "conversation '" + cid + "' left open (state " +
                                        std::string(to_string(conv.state)) + ")");
            }
            if (conv.cancel_outstanding) {
                add(conv.last_line, "conversation '" + cid + "' ends with an unanswered cancel");
            }
            if (conv.change_outstanding) {
                add(conv.last_line,
                    "conversation '" + cid + "' ends with an unconfirmed change request");
            }
        }
    }

    ProtocolVariant variant_;
    DialectId dialect_;
    ValidationReport report_;
    std::map<std::string, Conversation> conversations_;
    std::set<std::string> seen_msg_ids_;
    LogicalTime last_sent_ = 0;
};

inline ValidationReport validate_trace_text(const std::string& text, ProtocolVariant variant,
                                            DialectId dialect) {
    TraceValidator validator(variant, dialect);
    return validator.validate_text(text);
}

}  // namespace cnp
