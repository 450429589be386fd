#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cnp/agents.hpp"
#include "cnp/core.hpp"
#include "cnp/messaging.hpp"
#include "cnp/metrics.hpp"
#include "cnp/protocol.hpp"
#include "cnp/scenario.hpp"
#include "cnp/sim.hpp"

namespace cnp {

/// One run's full parameter set. Every field round-trips through the trace
/// header line, so a trace is self-describing.
struct RunConfig {
    ProtocolVariant variant = ProtocolVariant::Conventional;
    DialectId dialect = DialectId::AclF;
    int tasks = 5;
    int changes = 2;
    int contractors = 4;
    int grid_width = 10;
    int grid_height = 10;
    std::uint64_t seed = 42;
    LogicalTime latency_base = 1;
    LogicalTime latency_jitter = 0;
    int retry_budget = 2;
    int report_interval = 5;
    ProgressPolicy progress_policy = ProgressPolicy::Reset;
    LogicalTime expiration_window = 4;
    int work_ticks = 5;
    LogicalTime max_ticks = 100000;

    void validate() const {
        if (tasks < 0) throw ConfigError("tasks must be >= 0");
        if (changes < 0) throw ConfigError("changes must be >= 0");
        if (contractors < 0) throw ConfigError("contractors must be >= 0");
        if (changes > tasks) {
            throw ConfigError("changes (" + std::to_string(changes) + ") cannot exceed tasks (" +
                              std::to_string(tasks) + ")");
        }
        if (grid_width < 2 || grid_height < 2) throw ConfigError("grid must be at least 2x2");
        if (retry_budget < 0) throw ConfigError("retry_budget must be >= 0");
        if (report_interval < 0) throw ConfigError("report_interval must be >= 0");
        if (expiration_window < 1) throw ConfigError("expiration_window must be >= 1");
        if (work_ticks < 1) throw ConfigError("work_ticks must be >= 1");
        if (max_ticks < 1) throw ConfigError("max_ticks must be >= 1");
    }

    std::string grid_text() const {
        return std::to_string(grid_width) + "x" + std::to_string(grid_height);
    }

    std::string latency_text() const {
        return fmt_num(latency_base) + ":" + fmt_num(latency_jitter);
    }

    /// Everything that defines the scenario, i.e. the config minus the
    /// protocol variant and the surface dialect.
    std::string scenario_text() const {
        std::string s;
        s += "tasks=" + std::to_string(tasks);
        s += " changes=" + std::to_string(changes);
        s += " contractors=" + std::to_string(contractors);
        s += " grid=" + grid_text();
        s += " seed=" + fmt_num(seed);
        s += " latency=" + latency_text();
        s += " retry_budget=" + std::to_string(retry_budget);
        s += " report_interval=" + std::to_string(report_interval);
        s += " progress_policy=" + std::string(to_string(progress_policy));
        s += " expiration_window=" + fmt_num(expiration_window);
        s += " work_ticks=" + std::to_string(work_ticks);
        s += " max_ticks=" + fmt_num(max_ticks);
        return s;
    }

    std::uint64_t scenario_hash() const { return fnv1a(scenario_text()); }

    /// First line of every trace file.
    std::string header_line() const {
        std::string s = "# config: variant=";
        s += to_string(variant);
        s += " dialect=";
        s += Dialect::get(dialect).name();
        s += ' ';
        s += scenario_text();
        return s;
    }

    void apply(const std::string& key, const std::string& value);
};

namespace detail {

inline std::uint64_t parse_cfg_u64(const std::string& value, const std::string& key) {
    try {
        return parse_u64(value, key);
    } catch (const ParseError& e) {
        throw ConfigError(std::string(e.what()));
    }
}

inline int parse_cfg_int(const std::string& value, const std::string& key, long long max_value) {
    std::uint64_t v = parse_cfg_u64(value, key);
    if (v > static_cast<std::uint64_t>(max_value)) {
        throw ConfigError("config key '" + key + "' value " + value + " is out of range");
    }
    return static_cast<int>(v);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

}  // namespace detail

inline std::pair<int, int> parse_grid_text(const std::string& value) {
    std::size_t x = value.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= value.size()) {
        throw ConfigError("grid must look like WIDTHxHEIGHT, got '" + value + "'");
    }
    return {detail::parse_cfg_int(value.substr(0, x), "grid width", 1 << 20),
            detail::parse_cfg_int(value.substr(x + 1), "grid height", 1 << 20)};
}

inline std::pair<LogicalTime, LogicalTime> parse_latency_text(const std::string& value) {
    std::size_t colon = value.find(':');
    if (colon == std::string::npos) {
        return {detail::parse_cfg_u64(value, "latency base"), 0};
    }
    return {detail::parse_cfg_u64(value.substr(0, colon), "latency base"),
            detail::parse_cfg_u64(value.substr(colon + 1), "latency jitter")};
}

inline void RunConfig::apply(const std::string& key, const std::string& value) {
    try {
        if (key == "variant") {
            variant = parse_variant(value);
        } else if (key == "dialect") {
            dialect = Dialect::by_name(value).id();
        } else if (key == "tasks") {
            tasks = detail::parse_cfg_int(value, key, 100000);
        } else if (key == "changes") {
            changes = detail::parse_cfg_int(value, key, 100000);
        } else if (key == "contractors") {
            contractors = detail::parse_cfg_int(value, key, 100000);
        } else if (key == "grid") {
            auto [w, h] = parse_grid_text(value);
            grid_width = w;
            grid_height = h;
        } else if (key == "seed") {
            seed = detail::parse_cfg_u64(value, key);
        } else if (key == "latency") {
            auto [base, jitter] = parse_latency_text(value);
            latency_base = base;
            latency_jitter = jitter;
        } else if (key == "retry_budget") {
            retry_budget = detail::parse_cfg_int(value, key, 1000000);
        } else if (key == "report_interval") {
            report_interval = detail::parse_cfg_int(value, key, 1 << 30);
        } else if (key == "progress_policy") {
            progress_policy = parse_progress_policy(value);
        } else if (key == "expiration_window") {
            expiration_window = detail::parse_cfg_u64(value, key);
        } else if (key == "work_ticks") {
            work_ticks = detail::parse_cfg_int(value, key, 1 << 30);
        } else if (key == "max_ticks") {
            max_ticks = detail::parse_cfg_u64(value, key);
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const DialectError& e) {
        throw ConfigError(std::string(e.what()));
    }
}

inline constexpr std::string_view kConfigHeaderPrefix = "# config:";

/// Parses "key=value [key=value ...]" after the header prefix.
inline RunConfig parse_header_line(std::string_view line, RunConfig base = {}) {
    std::string_view body = detail::trim(line);
    if (!body.starts_with(kConfigHeaderPrefix)) {
        throw ConfigError("not a config header line");
    }
    body.remove_prefix(kConfigHeaderPrefix.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        while (pos < body.size() && body[pos] == ' ') ++pos;
        std::size_t end = body.find(' ', pos);
        if (end == std::string_view::npos) end = body.size();
        std::string_view item = body.substr(pos, end - pos);
        pos = end;
        if (item.empty()) continue;
        std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("malformed header item '" + std::string(item) + "'");
        }
        base.apply(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
    }
    return base;
}

/// Config file: one key=value per line; # starts a comment, except that a
/// full "# config:" header line is accepted whole.
inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = detail::trim(raw);
        if (line.empty()) continue;
        try {
            if (line.starts_with(kConfigHeaderPrefix)) {
                base = parse_header_line(line, base);
                continue;
            }
            if (line.front() == '#') continue;
            std::size_t eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("expected key=value");
            }
            base.apply(std::string(detail::trim(line.substr(0, eq))),
                       std::string(detail::trim(line.substr(eq + 1))));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), base);
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct ChangeRecord {
    TaskId task_id;
    LogicalTime injected_at = 0;
    std::string new_target;
    std::optional<ChangeOutcome> outcome;
};

struct RunResult {
    RunConfig config;
    std::vector<Envelope> trace;
    std::string trace_text;  // header line + one encoded envelope per line
    std::vector<ContractRecord> contracts;  // announcement order
    LogicalTime final_clock = 0;
    ExperimentReport report;
    std::vector<ChangeRecord> changes;
    int captures = 0;
    int escapes = 0;
    int skipped_injections = 0;
};

inline ScenarioParams scenario_params(const RunConfig& cfg) {
    ScenarioParams params;
    params.tasks = cfg.tasks;
    params.changes = cfg.changes;
    params.contractors = cfg.contractors;
    params.grid_width = cfg.grid_width;
    params.grid_height = cfg.grid_height;
    params.seed = cfg.seed;
    // Preys spawn out of reach of a full work phase: hunters close at most
    // 1.5 cells per tick (predator steps plus prey drift), so this floor
    // keeps default runs capture-free and their timing purely work-driven.
    params.min_prey_distance = (cfg.work_ticks * 3 + 1) / 2 + 2;
    return params;
}

namespace detail {

class ExperimentRunner {
public:
    ExperimentRunner(const RunConfig& cfg, ScenarioBuild build)
        : cfg_(cfg),
          build_(std::move(build)),
          net_(LatencyModel(cfg.latency_base, cfg.latency_jitter,
                            cfg.seed ^ 0xc2b2ae3d27d4eb4full)),
          factory_(Dialect::get(cfg.dialect)),
          manager_(build_.manager_id,
                   ManagerConfig{cfg.variant, cfg.retry_budget, cfg.expiration_window},
                   factory_) {}

    RunResult run() {
        net_.set_trace_sink([this](const Envelope& env) { trace_.push_back(env); });
        wire_manager();
        wire_contractors();
        for (const ChangeInjection& injection : build_.change_plan) {
            plan_.emplace(build_.tasks[static_cast<std::size_t>(injection.task_index)].task_id,
                          injection);
        }
        if (!build_.tasks.empty()) {
            net_.schedule(0, EventPhase::Control,
                          [this](LogicalTime now) { announce_next(now); });
            net_.schedule(1, EventPhase::Work, [this](LogicalTime now) { world_tick(now); });
        }
        result_.final_clock = net_.run_until_quiescent(cfg_.max_ticks);
        finalize();
        return std::move(result_);
    }

private:
    void wire_manager() {
        net_.register_agent(manager_.id(), [this](const Envelope& env, LogicalTime now) {
            send_all(manager_.on_envelope(env, now));
            after_manager_activity(now);
        });
        manager_.set_deadline_scheduler([this](const TaskId& tid, int attempt, LogicalTime at) {
            net_.schedule(at, EventPhase::Deadline, [this, tid, attempt](LogicalTime now) {
                send_all(manager_.on_deadline(tid, attempt, now));
                after_manager_activity(now);
            });
        });
    }

    void wire_contractors() {
        ContractorConfig config;
        config.capabilities = {"chase"};
        config.work_rate = 1.0 / cfg_.work_ticks;
        config.report_interval = cfg_.report_interval;
        config.progress_policy = cfg_.progress_policy;

        for (const AgentId& cid : build_.contractor_ids) {
            auto slot = contractors_.emplace(cid, ContractorAgent(cid, config, factory_)).first;
            ContractorAgent& agent = slot->second;
            agent.set_cost_fn([this, cid](const TaskSpec& task) {
                TargetRef ref = parse_target(task.target);
                return bid_cost(build_.world, build_.world.predator_cell(cid), ref.cell);
            });
            agent.on_assigned = [this, cid](const TaskSpec& task, LogicalTime now) {
                mirror_assignment(cid, task);
                manager_.note_execution_started(task.task_id, now);
                maybe_schedule_injection(task.task_id, now);
            };
            agent.on_retargeted = [this, cid](const TaskSpec& task, LogicalTime) {
                mirror_assignment(cid, task);
            };
            agent.on_released = [this, cid](const TaskId&, LogicalTime) {
                build_.world.unassign(cid);
            };
            net_.register_agent(cid, [this, &agent](const Envelope& env, LogicalTime now) {
                send_all(agent.on_envelope(env, now));
            });
        }
    }

    void send_all(std::vector<Envelope> envelopes) {
        for (Envelope& env : envelopes) net_.send(std::move(env));
    }

    void announce_next(LogicalTime now) {
        if (next_task_ >= build_.tasks.size()) return;
        TaskSpec task = build_.tasks[next_task_];
        const std::string& prey = build_.task_preys[next_task_];
        task.target = make_target(prey, build_.world.prey(prey).cell);
        next_task_ += 1;
        current_task_ = task.task_id;
        send_all(manager_.announce(std::move(task), build_.contractor_ids, now));
    }

    /// Tasks run one after another: when the current contract reaches a
    /// terminal state, the next announcement goes out the same tick.
    void after_manager_activity(LogicalTime now) {
        if (current_task_.empty() || !manager_.manages(current_task_)) return;
        if (ManagerAgent::is_terminal(manager_.contract(current_task_).state)) {
            announce_next(now);
        }
    }

    void mirror_assignment(const AgentId& cid, const TaskSpec& task) {
        TargetRef ref = parse_target(task.target);
        if (build_.world.prey_alive(ref.prey)) {
            build_.world.assign(cid, ref.prey);
        } else {
            build_.world.unassign(cid);
        }
    }

    void maybe_schedule_injection(const TaskId& tid, LogicalTime now) {
        auto it = plan_.find(tid);
        if (it == plan_.end() || injected_.contains(tid)) return;
        injected_.insert(tid);
        net_.schedule(now + it->second.delay, EventPhase::Control,
                      [this, tid](LogicalTime at) { inject_change(tid, at); });
    }

    void inject_change(const TaskId& tid, LogicalTime now) {
        if (!manager_.manages(tid)) return;
        const ContractRecord& record = manager_.contract(tid);
        if (record.state != ContractState::InProgress) {
            result_.skipped_injections += 1;
            return;
        }
        std::string new_target = pick_retarget(record);
        send_all(manager_.request_change(tid, new_target, std::nullopt, now));
        result_.changes.push_back(ChangeRecord{tid, now, std::move(new_target), std::nullopt});
    }

    /// Changes point the contract at the dangerous prey when that is a real
    /// retarget; otherwise they re-stamp the current prey at its present
    /// cell (the destination moved).
    std::string pick_retarget(const ContractRecord& record) const {
        TargetRef current = parse_target(record.task.target);
        const std::string& dangerous = build_.dangerous_prey;
        if (!dangerous.empty() && dangerous != current.prey &&
            build_.world.prey_alive(dangerous)) {
            return make_target(dangerous, build_.world.prey(dangerous).cell);
        }
        return make_target(current.prey, build_.world.prey(current.prey).cell);
    }

    void world_tick(LogicalTime now) {
        GridWorld::StepEvents events = build_.world.step();
        for (const auto& [prey, predator] : events.captures) {
            result_.captures += 1;
            for (auto& [cid, agent] : contractors_) {
                std::vector<TaskId> caught;
                for (const auto& [tid, work] : agent.active_contracts()) {
                    if (parse_target(work.task.target).prey == prey) caught.push_back(tid);
                }
                for (const TaskId& tid : caught) agent.set_progress(tid, 1.0);
            }
        }
        for (const std::string& prey : events.escapes) {
            result_.escapes += 1;
            for (auto& [cid, agent] : contractors_) {
                std::vector<TaskId> lost;
                for (const auto& [tid, work] : agent.active_contracts()) {
                    if (parse_target(work.task.target).prey == prey) lost.push_back(tid);
                }
                for (const TaskId& tid : lost) {
                    send_all(agent.fail_contract(tid, "prey-escaped", now));
                }
            }
        }
        for (auto& [cid, agent] : contractors_) send_all(agent.execute_tick(now));
        if (!(next_task_ >= build_.tasks.size() && manager_.all_terminal())) {
            net_.schedule(now + 1, EventPhase::Work,
                          [this](LogicalTime at) { world_tick(at); });
        }
    }

    void finalize() {
        for (const TaskSpec& task : build_.tasks) {
            if (manager_.manages(task.task_id)) {
                result_.contracts.push_back(manager_.contract(task.task_id));
            }
        }
        std::map<TaskId, std::size_t> seen;
        for (ChangeRecord& change : result_.changes) {
            const auto& log = manager_.contract(change.task_id).change_log;
            std::size_t index = seen[change.task_id]++;
            if (index < log.size()) change.outcome = log[index].outcome;
        }

        const Dialect& dialect = Dialect::get(cfg_.dialect);
        std::string text = cfg_.header_line();
        text += '\n';
        for (const Envelope& env : trace_) {
            text += encode(env, dialect);
            text += '\n';
        }
        result_.trace_text = std::move(text);
        result_.trace = std::move(trace_);
        result_.config = cfg_;
        result_.report = summarize(result_.trace, result_.contracts, result_.final_clock,
                                   RunMeta{cfg_.variant, std::string(dialect.name()),
                                           cfg_.scenario_hash()});
    }

    RunConfig cfg_;
    ScenarioBuild build_;
    Network net_;
    EnvelopeFactory factory_;
    ManagerAgent manager_;
    std::map<AgentId, ContractorAgent> contractors_;
    std::map<TaskId, ChangeInjection> plan_;
    std::set<TaskId> injected_;
    std::vector<Envelope> trace_;
    RunResult result_;
    std::size_t next_task_ = 0;
    TaskId current_task_;
};

}  // namespace detail

/// Runs the protocol over a caller-supplied scenario.
inline RunResult run_experiment(const RunConfig& cfg, ScenarioBuild build) {
    cfg.validate();
    detail::ExperimentRunner runner(cfg, std::move(build));
    return runner.run();
}

/// Runs the standard pursuit experiment the config describes.
inline RunResult run_experiment(const RunConfig& cfg) {
    cfg.validate();
    return run_experiment(cfg, build_experiment(scenario_params(cfg)));
}

}  // namespace cnp
