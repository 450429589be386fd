#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnp/core.hpp"
#include "cnp/protocol.hpp"

namespace cnp {

enum class Performative {
    CallForProposals,
    Propose,
    Refuse,
    AcceptProposal,
    RejectProposal,
    Inform,
    RequestChange,
    Cancel,
    Failure,
    ConfirmChange,
};

inline constexpr std::array<Performative, 10> kAllPerformatives = {
    Performative::CallForProposals, Performative::Propose,       Performative::Refuse,
    Performative::AcceptProposal,   Performative::RejectProposal, Performative::Inform,
    Performative::RequestChange,    Performative::Cancel,         Performative::Failure,
    Performative::ConfirmChange,
};

enum class DialectId { AclF, AclK };

/// Speech-act vocabulary. Both tables cover every performative, the two
/// vocabularies are disjoint, and within a table no keyword repeats, so a
/// keyword alone identifies both the performative and the dialect.
class Dialect {
public:
    std::string_view name() const { return name_; }
    DialectId id() const { return id_; }

    std::string_view keyword(Performative p) const {
        return table_[static_cast<std::size_t>(p)];
    }

    std::optional<Performative> performative(std::string_view keyword) const {
        for (std::size_t i = 0; i < table_.size(); ++i) {
            if (table_[i] == keyword) return kAllPerformatives[i];
        }
        return std::nullopt;
    }

    static const Dialect& acl_f() {
        static const Dialect d{DialectId::AclF,
                               "acl-f",
                               {"cfp", "propose", "refuse", "accept-proposal", "reject-proposal",
                                "inform", "request", "cancel", "failure", "confirm"}};
        return d;
    }

    static const Dialect& acl_k() {
        static const Dialect d{DialectId::AclK,
                               "acl-k",
                               {"achieve", "tell", "sorry", "accept", "decline", "reply",
                                "ask-one", "untell", "error", "acknowledge"}};
        return d;
    }

    static const Dialect& get(DialectId id) {
        return id == DialectId::AclF ? acl_f() : acl_k();
    }

    static const Dialect& by_name(std::string_view name) {
        if (name == "acl-f") return acl_f();
        if (name == "acl-k") return acl_k();
        throw DialectError("unknown dialect '" + std::string(name) + "' (expected acl-f|acl-k)");
    }

    /// Looks a keyword up across both vocabularies.
    static std::optional<std::pair<Performative, DialectId>> resolve(std::string_view keyword) {
        if (auto p = acl_f().performative(keyword)) return std::pair{*p, DialectId::AclF};
        if (auto p = acl_k().performative(keyword)) return std::pair{*p, DialectId::AclK};
        return std::nullopt;
    }

private:
    Dialect(DialectId id, std::string_view name, std::array<std::string_view, 10> table)
        : id_(id), name_(name), table_(table) {}

    DialectId id_;
    std::string_view name_;
    std::array<std::string_view, 10> table_;
};

inline std::string_view to_string(Performative p) {
    switch (p) {
        case Performative::CallForProposals: return "call-for-proposals";
        case Performative::Propose: return "propose";
        case Performative::Refuse: return "refuse";
        case Performative::AcceptProposal: return "accept-proposal";
        case Performative::RejectProposal: return "reject-proposal";
        case Performative::Inform: return "inform";
        case Performative::RequestChange: return "request-change";
        case Performative::Cancel: return "cancel";
        case Performative::Failure: return "failure";
        case Performative::ConfirmChange: return "confirm-change";
    }
    return "?";
}

struct Envelope {
    std::string msg_id;
    std::string conversation_id;
    AgentId sender;
    AgentId receiver;
    Performative performative = Performative::Inform;
    std::string dialect_keyword;  // keyword of the active dialect
    std::string payload;          // kv-encoded, see kv_encode
    LogicalTime sent_at = 0;
    LogicalTime delivered_at = 0;

    bool operator==(const Envelope&) const = default;
};

// ---------------------------------------------------------------------------
// Payload codec: comma-separated key=value pairs, values percent-escaped.
// ---------------------------------------------------------------------------

using KvPairs = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline bool kv_needs_escape(unsigned char c) {
    return c == '%' || c == ',' || c == '=' || c == '|' || c < 0x20 || c == 0x7f;
}

inline void kv_append_escaped(std::string& out, std::string_view text) {
    static const char* hex = "0123456789ABCDEF";
    for (unsigned char c : text) {
        if (kv_needs_escape(c)) {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
}

inline int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

inline std::string kv_unescape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '%') {
            out.push_back(text[i]);
            continue;
        }
        if (i + 2 >= text.size()) throw ParseError("truncated escape in payload");
        int hi = hex_digit(text[i + 1]);
        int lo = hex_digit(text[i + 2]);
        if (hi < 0 || lo < 0) throw ParseError("bad escape in payload");
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
    }
    return out;
}

}  // namespace detail

inline std::string kv_encode(const KvPairs& pairs) {
    std::string out;
    bool first = true;
    for (const auto& [key, value] : pairs) {
        if (!first) out.push_back(',');
        first = false;
        detail::kv_append_escaped(out, key);
        out.push_back('=');
        detail::kv_append_escaped(out, value);
    }
    return out;
}

inline KvPairs kv_decode(std::string_view payload) {
    KvPairs pairs;
    if (payload.empty()) return pairs;
    std::size_t start = 0;
    while (start <= payload.size()) {
        std::size_t end = payload.find(',', start);
        if (end == std::string_view::npos) end = payload.size();
        std::string_view item = payload.substr(start, end - start);
        std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError("payload item without '=': '" + std::string(item) + "'");
        }
        pairs.emplace_back(detail::kv_unescape(item.substr(0, eq)),
                           detail::kv_unescape(item.substr(eq + 1)));
        if (end == payload.size()) break;
        start = end + 1;
    }
    return pairs;
}

inline std::optional<std::string> kv_find(const KvPairs& pairs, std::string_view key) {
    for (const auto& [k, v] : pairs) {
        if (k == key) return v;
    }
    return std::nullopt;
}

inline std::string kv_require(const KvPairs& pairs, std::string_view key) {
    if (auto v = kv_find(pairs, key)) return *v;
    throw ParseError("payload missing key '" + std::string(key) + "'");
}

// ---------------------------------------------------------------------------
// Wire format: one envelope per line,
//   msg_id|conversation_id|sender|receiver|keyword|sent_at|delivered_at|payload
// ---------------------------------------------------------------------------

struct EncodeLimits {
    std::size_t max_payload_bytes = 4096;
};

namespace detail {

inline void check_field(std::string_view value, std::string_view field) {
    for (char c : value) {
        if (c == '|' || c == '\n' || c == '\r') {
            throw EncodeError("field '" + std::string(field) + "' contains a separator byte");
        }
    }
}

}  // namespace detail

inline std::string encode(const Envelope& env, const Dialect& dialect,
                          const EncodeLimits& limits = {}) {
    std::string_view expected = dialect.keyword(env.performative);
    if (!env.dialect_keyword.empty() && env.dialect_keyword != expected) {
        throw DialectError("envelope keyword '" + env.dialect_keyword + "' is not the " +
                           std::string(dialect.name()) + " keyword for " +
                           std::string(to_string(env.performative)));
    }
    if (env.payload.size() > limits.max_payload_bytes) {
        throw EncodeError("payload of " + std::to_string(env.payload.size()) +
                          " bytes exceeds limit of " + std::to_string(limits.max_payload_bytes));
    }
    detail::check_field(env.msg_id, "msg_id");
    detail::check_field(env.conversation_id, "conversation_id");
    detail::check_field(env.sender, "sender");
    detail::check_field(env.receiver, "receiver");
    detail::check_field(env.payload, "payload");

    std::string line;
    line.reserve(env.payload.size() + 64);
    line += env.msg_id;
    line += '|';
    line += env.conversation_id;
    line += '|';
    line += env.sender;
    line += '|';
    line += env.receiver;
    line += '|';
    line += expected;
    line += '|';
    line += fmt_num(env.sent_at);
    line += '|';
    line += fmt_num(env.delivered_at);
    line += '|';
    line += env.payload;
    return line;
}

/// Parses one wire line. The keyword identifies the dialect, so none needs
/// to be supplied. Timestamps are not sanity-checked here; the trace
/// validator owns that judgement.
inline Envelope decode(std::string_view line) {
    std::array<std::string_view, 8> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i < 7; ++i) {
        std::size_t bar = line.find('|', start);
        if (bar == std::string_view::npos) {
            throw ParseError("expected 8 |-separated fields, found " + std::to_string(i + 1));
        }
        fields[i] = line.substr(start, bar - start);
        start = bar + 1;
    }
    fields[7] = line.substr(start);
    if (fields[7].find('|') != std::string_view::npos) {
        throw ParseError("expected 8 |-separated fields, found more");
    }

    auto resolved = Dialect::resolve(fields[4]);
    if (!resolved) {
        throw DialectError("unknown performative keyword '" + std::string(fields[4]) + "'");
    }

    Envelope env;
    env.msg_id = std::string(fields[0]);
    env.conversation_id = std::string(fields[1]);
    env.sender = std::string(fields[2]);
    env.receiver = std::string(fields[3]);
    env.performative = resolved->first;
    env.dialect_keyword = std::string(fields[4]);
    env.sent_at = parse_u64(fields[5], "sent_at");
    env.delivered_at = parse_u64(fields[6], "delivered_at");
    env.payload = std::string(fields[7]);
    if (env.msg_id.empty()) throw ParseError("empty msg_id");
    if (env.conversation_id.empty()) throw ParseError("empty conversation_id");
    if (env.sender.empty()) throw ParseError("empty sender");
    if (env.receiver.empty()) throw ParseError("empty receiver");
    return env;
}

/// True when the two sequences describe the same protocol run and differ at
/// most in surface vocabulary.
inline bool dialect_equivalent(const std::vector<Envelope>& a, const std::vector<Envelope>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        Envelope lhs = a[i];
        Envelope rhs = b[i];
        lhs.dialect_keyword.clear();
        rhs.dialect_keyword.clear();
        if (!(lhs == rhs)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Protocol payloads
// ---------------------------------------------------------------------------

namespace payload {

inline std::string join_caps(const std::set<std::string>& caps) {
    std::string out;
    for (const auto& cap : caps) {
        if (!out.empty()) out.push_back(';');
        out += cap;
    }
    return out;
}

inline std::set<std::string> split_caps(std::string_view text) {
    std::set<std::string> caps;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find(';', start);
        if (end == std::string_view::npos) end = text.size();
        if (end > start) caps.emplace(text.substr(start, end - start));
        start = end + 1;
    }
    return caps;
}

/// Call-for-proposals body. attempt counts announcement rounds for the
/// same conversation, starting at 1.
inline std::string task(const TaskSpec& t, int attempt) {
    KvPairs kv;
    kv.emplace_back("task", t.task_id);
    kv.emplace_back("name", t.name);
    kv.emplace_back("abstraction", t.abstraction);
    kv.emplace_back("caps", join_caps(t.bid_spec.required_capabilities));
    if (t.bid_spec.max_cost) kv.emplace_back("max_cost", fmt_num(*t.bid_spec.max_cost));
    kv.emplace_back("expires", fmt_num(t.expiration));
    kv.emplace_back("target", t.target);
    kv.emplace_back("revision", std::to_string(t.revision));
    kv.emplace_back("attempt", std::to_string(attempt));
    return kv_encode(kv);
}

struct ParsedTask {
    TaskSpec spec;
    int attempt = 1;
};

inline ParsedTask parse_task(const KvPairs& kv) {
    ParsedTask parsed;
    parsed.spec.task_id = kv_require(kv, "task");
    parsed.spec.name = kv_find(kv, "name").value_or("");
    parsed.spec.abstraction = kv_find(kv, "abstraction").value_or("");
    parsed.spec.bid_spec.required_capabilities = split_caps(kv_find(kv, "caps").value_or(""));
    if (auto mc = kv_find(kv, "max_cost")) parsed.spec.bid_spec.max_cost = parse_double(*mc, "max_cost");
    parsed.spec.expiration = parse_u64(kv_require(kv, "expires"), "expires");
    parsed.spec.target = kv_require(kv, "target");
    parsed.spec.revision = static_cast<std::uint32_t>(parse_u64(kv_require(kv, "revision"), "revision"));
    parsed.attempt = static_cast<int>(parse_u64(kv_require(kv, "attempt"), "attempt"));
    return parsed;
}

inline std::string bid(const Bid& b, int attempt) {
    KvPairs kv;
    kv.emplace_back("task", b.task_id);
    kv.emplace_back("cost", fmt_num(b.cost));
    kv.emplace_back("submitted", fmt_num(b.submitted_at));
    kv.emplace_back("attempt", std::to_string(attempt));
    return kv_encode(kv);
}

struct ParsedBid {
    Bid bid;
    int attempt = 1;
};

inline ParsedBid parse_bid(const KvPairs& kv, const AgentId& sender) {
    ParsedBid parsed;
    parsed.bid.task_id = kv_require(kv, "task");
    parsed.bid.contractor_id = sender;
    parsed.bid.cost = parse_double(kv_require(kv, "cost"), "cost");
    parsed.bid.submitted_at = parse_u64(kv_require(kv, "submitted"), "submitted");
    parsed.attempt = static_cast<int>(parse_u64(kv_require(kv, "attempt"), "attempt"));
    return parsed;
}

inline std::string refusal(const TaskId& task, std::string_view reason, int attempt) {
    KvPairs kv;
    kv.emplace_back("task", task);
    kv.emplace_back("reason", std::string(reason));
    kv.emplace_back("attempt", std::to_string(attempt));
    return kv_encode(kv);
}

inline std::string award(const TaskId& task) {
    return kv_encode({{"task", task}});
}

inline std::string interim(const InterimReport& r) {
    KvPairs kv;
    kv.emplace_back("task", r.task_id);
    kv.emplace_back("kind", "interim");
    kv.emplace_back("progress", fmt_num(r.progress_fraction));
    kv.emplace_back("revision", std::to_string(r.revision));
    return kv_encode(kv);
}

inline std::string final_report(const FinalReport& r) {
    KvPairs kv;
    kv.emplace_back("task", r.task_id);
    kv.emplace_back("kind", "final");
    kv.emplace_back("deadline", fmt_num(r.deadline));
    kv.emplace_back("completed", fmt_num(r.completed_at));
    kv.emplace_back("revision", std::to_string(r.revision_completed));
    return kv_encode(kv);
}

inline std::string cancel(const TaskId& task) {
    return kv_encode({{"task", task}});
}

inline std::string cancel_ack(const TaskId& task) {
    return kv_encode({{"task", task}, {"kind", "cancel-ack"}});
}

/// Request-change body carries the replacement target and, when present,
/// the replacement bid spec. revision is the revision the contractor is
/// expected to confirm.
inline std::string change_request(const TaskId& task, std::string_view new_target,
                                  const std::optional<BidSpecification>& new_spec,
                                  std::uint32_t revision) {
    KvPairs kv;
    kv.emplace_back("task", task);
    kv.emplace_back("target", std::string(new_target));
    if (new_spec) {
        kv.emplace_back("caps", join_caps(new_spec->required_capabilities));
        if (new_spec->max_cost) kv.emplace_back("max_cost", fmt_num(*new_spec->max_cost));
    }
    kv.emplace_back("revision", std::to_string(revision));
    return kv_encode(kv);
}

inline std::string change_confirm(const TaskId& task, std::uint32_t revision) {
    return kv_encode({{"task", task}, {"revision", std::to_string(revision)}});
}

inline std::string failure(const TaskId& task, std::string_view reason) {
    return kv_encode({{"task", task}, {"reason", std::string(reason)}});
}

}  // namespace payload

}  // namespace cnp
