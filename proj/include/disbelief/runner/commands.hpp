#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "disbelief/evaluation.hpp"
#include "disbelief/runner/config.hpp"
#include "disbelief/version.hpp"
#include "json.hpp"

namespace disbelief {

namespace fs = std::filesystem;

enum class SeedStatus { Pending, Running, Completed, Failed };

inline const char* to_string(SeedStatus s) {
    switch (s) {
    case SeedStatus::Pending: return "pending";
    case SeedStatus::Running: return "running";
    case SeedStatus::Completed: return "completed";
    case SeedStatus::Failed: return "failed";
    }
    return "unknown";
}

inline SeedStatus parse_seed_status(const std::string& s) {
    for (auto v : {SeedStatus::Pending, SeedStatus::Running, SeedStatus::Completed, SeedStatus::Failed})
        if (s == to_string(v)) return v;
    throw ParseError("manifest: unknown seed status '" + s + "'");
}

struct SeedRecord {
    std::uint64_t seed = 0;
    SeedStatus status = SeedStatus::Pending;
    std::string error;
    std::map<std::string, std::string> files; ///< role -> path relative to the run directory
};

/// Everything needed to rerun: the canonical config text, the seeds, the code version.
struct RunManifest {
    std::string code_version = kVersion;
    std::string config_yaml;
    std::vector<SeedRecord> seeds;

    bool completed() const {
        return !seeds.empty() &&
               std::all_of(seeds.begin(), seeds.end(), [](const auto& s) { return s.status == SeedStatus::Completed; });
    }
};

inline nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : m.seeds) {
        nlohmann::json j{{"seed", s.seed}, {"status", to_string(s.status)}, {"files", s.files}};
        if (!s.error.empty()) j["error"] = s.error;
        seeds.push_back(j);
    }
    return {{"code_version", m.code_version}, {"config", m.config_yaml}, {"seeds", seeds}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    try {
        RunManifest m;
        m.code_version = j.at("code_version").get<std::string>();
        m.config_yaml = j.at("config").get<std::string>();
        for (const auto& s : j.at("seeds")) {
            SeedRecord r;
            r.seed = s.at("seed").get<std::uint64_t>();
            r.status = parse_seed_status(s.at("status").get<std::string>());
            r.files = s.at("files").get<std::map<std::string, std::string>>();
            if (s.contains("error")) r.error = s.at("error").get<std::string>();
            m.seeds.push_back(std::move(r));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
}

inline void write_manifest(const fs::path& dir, const RunManifest& m) {
    write_text_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

inline RunManifest read_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
}

/// Refuses to touch existing outputs unless `force`; with `force` the listed files are replaced.
inline void guard_outputs(const std::vector<fs::path>& outputs, bool force) {
    if (force) return;
    for (const auto& p : outputs)
        if (fs::exists(p)) throw IoError(p.string() + " already exists; pass --force to overwrite");
}

inline std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

/// Fault injection point for tests: called before each seed starts training.
struct TrainHooks {
    std::function<void(std::uint64_t seed)> before_seed;
};

namespace detail {

class CsvStream {
public:
    CsvStream(const fs::path& path, const std::string& header) : path_(path), tmp_(path) {
        tmp_ += ".tmp";
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError("cannot write " + tmp_.string());
        out_ << header << '\n';
    }
    std::ostream& stream() { return out_; }
    void commit() {
        out_.close();
        if (!out_) throw IoError("failed writing " + tmp_.string());
        fs::rename(tmp_, path_);
    }

private:
    fs::path path_, tmp_;
    std::ofstream out_;
};

inline void write_ppo_row(std::ostream& os, std::size_t frames, const PpoStats& s) {
    os << frames;
    for (double v : {s.policy_loss, s.value_loss, s.entropy, s.clip_fraction, s.approx_kl}) os << ',' << format_number(v);
    os << '\n';
}

inline void train_model_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir, SeedRecord& rec) {
    auto env = cfg.make_env();
    const auto ac = cfg.agent_for_seed(seed);
    Rng data = make_rng(seed, Stream::Env, 0);
    auto trajs = collect_explorer_trajectories(*env, cfg.explorer.trajectories, cfg.explorer.epsilon, data);
    Rng init = make_rng(seed, Stream::ModelInit, 0);
    Hssm model(ac.model_config(*env), init);
    TrajectoryBuffer buffer(trajs.size());
    for (auto& t : trajs) buffer.add(std::move(t));
    ModelTrainConfig mtc;
    mtc.steps = cfg.explorer.iterations;
    mtc.batch_size = ac.model_batch;
    mtc.beta = ac.beta;
    mtc.adam.learning_rate = ac.model_learning_rate;
    auto opt = make_model_optimizer(mtc);
    Rng rng = make_rng(seed, Stream::ModelTrain, 0);
    CsvStream metrics(dir / "metrics.csv", kMetricsHeader);
    for (const auto& row : train_model(model, opt, buffer, mtc, rng)) write_metrics_row(metrics.stream(), row);
    metrics.commit();
    write_checkpoint(dir / "checkpoint.bin", to_checkpoint(model));
    rec.files = {{"metrics", seed_dir_name(seed) + "/metrics.csv"}, {"checkpoint", seed_dir_name(seed) + "/checkpoint.bin"}};
}

inline void train_agent_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir, SeedRecord& rec,
                             std::ostream& log) {
    auto env = cfg.make_env();
    const auto ac = cfg.agent_for_seed(seed);
    CsvStream metrics(dir / "metrics.csv", kMetricsHeader);
    CsvStream ppo(dir / "ppo.csv", "frames,policy_loss,value_loss,entropy,clip_fraction,approx_kl");
    AgentObserver obs;
    obs.on_model_metrics = [&](const std::vector<MetricsRow>& rows) {
        for (const auto& r : rows) write_metrics_row(metrics.stream(), r);
    };
    obs.on_ppo = [&](std::size_t frames, const PpoStats& s) { write_ppo_row(ppo.stream(), frames, s); };
    obs.on_evaluation = [&](const EvaluationPoint& p) {
        log << "seed " << seed << " frames " << p.frames << " return by episode:";
        for (double r : p.curve.episode_return_mean) log << ' ' << format_number(r);
        log << '\n';
    };
    auto run = train_agent(*env, ac, obs);
    metrics.commit();
    ppo.commit();
    write_csv(dir / "learning_curve.csv", learning_curve_table(run.learning_curve));
    auto entries = to_checkpoint(run.policy);
    if (run.model) {
        auto m = to_checkpoint(*run.model);
        entries.insert(entries.end(), m.begin(), m.end());
    }
    write_checkpoint(dir / "checkpoint.bin", entries);
    const auto d = seed_dir_name(seed);
    rec.files = {{"metrics", d + "/metrics.csv"},
                 {"ppo", d + "/ppo.csv"},
                 {"learning_curve", d + "/learning_curve.csv"},
                 {"checkpoint", d + "/checkpoint.bin"}};
}

} // namespace detail

/// Trains every seed into `out/seed_<n>/`. The manifest is written before
/// training and rewritten atomically after each seed; a failing seed is
/// recorded and the remaining seeds still run. Returns the final manifest.
inline RunManifest cmd_train(const ExperimentConfig& cfg, const fs::path& out, bool force, std::ostream& log,
                             const TrainHooks& hooks = {}) {
    if (fs::exists(out / "manifest.json")) {
        if (!force) throw IoError("run directory " + out.string() + " already holds a run; pass --force to overwrite");
        fs::remove_all(out);
    }
    fs::create_directories(out);
    RunManifest m;
    m.config_yaml = to_yaml(cfg);
    for (auto s : cfg.seeds) m.seeds.push_back({s, SeedStatus::Pending, {}, {}});
    write_text_atomic(out / "config.yaml", m.config_yaml);
    write_manifest(out, m);
    for (auto& rec : m.seeds) {
        rec.status = SeedStatus::Running;
        write_manifest(out, m);
        const auto dir = out / seed_dir_name(rec.seed);
        try {
            fs::create_directories(dir);
            if (hooks.before_seed) hooks.before_seed(rec.seed);
            if (cfg.mode == TrainMode::Model) detail::train_model_seed(cfg, rec.seed, dir, rec);
            else detail::train_agent_seed(cfg, rec.seed, dir, rec, log);
            rec.status = SeedStatus::Completed;
        } catch (const std::exception& e) {
            rec.status = SeedStatus::Failed;
            rec.error = e.what();
            log << "seed " << rec.seed << " failed: " << e.what() << '\n';
        }
        write_manifest(out, m);
    }
    return m;
}

/// Model and policy stored in a checkpoint, checked against the config's widths.
struct LoadedCheckpoint {
    std::optional<Hssm> model;
    std::optional<PolicyParams> policy;
};

inline LoadedCheckpoint load_checkpoint(const ExperimentConfig& cfg, const MetaEnv& env, const fs::path& path) {
    const auto entries = read_checkpoint(path);
    LoadedCheckpoint out;
    if (find_entry(entries, "hssm.config")) {
        out.model = hssm_from_checkpoint(entries);
        const auto want = cfg.agent.model_config(env);
        const auto& got = out.model->config;
        auto check = [&](const char* what, std::size_t a, std::size_t b) {
            if (a != b)
                throw ConfigError(path.string() + ": checkpoint " + what + " is " + std::to_string(a) +
                                  " but the config implies " + std::to_string(b));
        };
        check("state_dim", got.state_dim, want.state_dim);
        check("task_dim", got.task_dim, want.task_dim);
        check("encoder_hidden", got.encoder_hidden, want.encoder_hidden);
        check("observation width", got.observation_dim, want.observation_dim);
        check("action width", got.action_dim, want.action_dim);
    }
    if (find_entry(entries, "policy.config")) {
        out.policy = policy_from_checkpoint(entries);
        const std::size_t in = BeliefAgent::policy_input_dim(
            out.model ? std::optional<HssmConfig>(out.model->config) : std::nullopt, env);
        if (out.policy->config.input_dim != in)
            throw ConfigError(path.string() + ": checkpoint policy input width " +
                              std::to_string(out.policy->config.input_dim) + " does not match " + std::to_string(in));
    }
    if (!out.model && !out.policy) throw ParseError(path.string() + ": checkpoint holds neither a model nor a policy");
    return out;
}

/// Probe row: s-accuracy always; z-accuracy and z-KL are N/A without a task latent.
struct ProbeReport {
    std::string model;
    double beta = 0;
    std::size_t d_s = 0;
    std::size_t d_z = 0;
    ProbeResult result;
    bool has_task_latent = true;
};

inline CsvTable probe_report_table(const std::vector<ProbeReport>& rows) {
    CsvTable t{{"model", "beta", "d_s", "d_z", "s_accuracy", "z_accuracy", "z_kl"}, {}};
    for (const auto& r : rows)
        t.add_row({r.model, format_number(r.beta), std::to_string(r.d_s), std::to_string(r.d_z),
                   format_number(r.result.s_accuracy), r.has_task_latent ? format_number(r.result.z_accuracy) : "N/A",
                   r.has_task_latent ? format_number(r.result.z_kl) : "N/A"});
    return t;
}

inline ProbeReport run_probe(Hssm& model, const MetaEnv& env, const ProbeSettings& ps, double beta, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::Probe, 0);
    auto trajs = collect_explorer_trajectories(env, ps.trajectories, ps.epsilon, rng);
    auto ds = probe_dataset_from(model, trajs, env.task_classes(), ps.train);
    ProbeConfig pc;
    pc.l2 = ps.l2;
    ProbeReport rep;
    rep.model = model.config.has_task_latent() ? "HSSM" : "SSM";
    rep.beta = beta;
    rep.d_s = model.config.state_dim;
    rep.d_z = model.config.task_dim;
    rep.has_task_latent = model.config.has_task_latent();
    rep.result.s_accuracy = train_logistic_probe(ds, ProbeFeature::State, pc).test_accuracy;
    if (rep.has_task_latent) {
        rep.result.z_accuracy = train_logistic_probe(ds, ProbeFeature::Task, pc).test_accuracy;
        rep.result.z_kl = z_kl_metric(model, trajs);
    }
    return rep;
}

inline fs::path default_output_dir(const fs::path& checkpoint) {
    return checkpoint.has_parent_path() ? checkpoint.parent_path() : fs::path(".");
}

inline void cmd_probe(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out, bool force,
                      std::ostream& log) {
    auto env = cfg.make_env();
    if (env->task_classes() == 0) throw ConfigError("probe: " + to_string(cfg.env) + " has no discrete task labels");
    auto loaded = load_checkpoint(cfg, *env, checkpoint);
    if (!loaded.model) throw ConfigError("probe: " + checkpoint.string() + " holds no model");
    guard_outputs({out / "probe.csv"}, force);
    fs::create_directories(out);
    auto rep = run_probe(*loaded.model, *env, cfg.probe, cfg.agent.beta, cfg.seeds.front());
    write_csv(out / "probe.csv", probe_report_table({rep}));
    log << "s accuracy " << format_number(rep.result.s_accuracy);
    if (rep.has_task_latent)
        log << ", z accuracy " << format_number(rep.result.z_accuracy) << ", z KL " << format_number(rep.result.z_kl);
    log << '\n';
}

inline CsvTable reward_curve_table(const RewardCurve& c, const std::string& variant) {
    CsvTable t{{"variant", "t", "episode", "step", "reward_mean", "reward_std"}, {}};
    for (std::size_t k = 0; k < c.mean.size(); ++k)
        t.add_row({variant, std::to_string(k), std::to_string(k / c.horizon + 1), std::to_string(k % c.horizon),
                   format_number(c.mean[k]), format_number(c.std[k])});
    return t;
}

inline std::vector<double> column_numbers(const CsvTable& t, const std::string& name) {
    auto it = std::find(t.columns.begin(), t.columns.end(), name);
    if (it == t.columns.end()) throw ParseError("csv: missing column '" + name + "'");
    const auto k = static_cast<std::size_t>(it - t.columns.begin());
    std::vector<double> out;
    for (const auto& r : t.rows) {
        try {
            out.push_back(std::stod(r.at(k)));
        } catch (const std::exception&) {
            throw ParseError("csv: column '" + name + "' has non-numeric value '" + (k < r.size() ? r[k] : "") + "'");
        }
    }
    return out;
}

inline std::vector<std::string> column_strings(const CsvTable& t, const std::string& name) {
    auto it = std::find(t.columns.begin(), t.columns.end(), name);
    if (it == t.columns.end()) throw ParseError("csv: missing column '" + name + "'");
    const auto k = static_cast<std::size_t>(it - t.columns.begin());
    std::vector<std::string> out;
    for (const auto& r : t.rows) out.push_back(r.at(k));
    return out;
}

inline bool has_column(const CsvTable& t, const std::string& name) {
    return std::find(t.columns.begin(), t.columns.end(), name) != t.columns.end();
}

struct PlotOptions {
    std::string title;
    std::optional<std::size_t> episode; ///< learning curves: which episode's return; default the last
};

/// Overlays reward-curve or learning-curve CSVs (detected from the header).
/// Learning-curve rows are averaged over seeds per (variant, beta, frames).
inline PlotSpec plot_spec_from_csvs(const std::vector<fs::path>& inputs, const PlotOptions& opt) {
    if (inputs.empty()) throw ValueError("plot: no input files");
    PlotSpec spec;
    spec.title = opt.title;
    std::optional<bool> reward_kind;
    for (const auto& path : inputs) {
        if (!fs::exists(path)) throw IoError("plot: no such file " + path.string());
        auto t = read_csv(path);
        const bool is_reward = has_column(t, "reward_mean");
        const bool is_learning = has_column(t, "return_mean");
        if (!is_reward && !is_learning)
            throw ParseError("plot: " + path.string() + " is neither a reward-curve nor a learning-curve CSV");
        if (reward_kind && *reward_kind != is_reward) throw ValueError("plot: cannot mix reward and learning curves");
        reward_kind = is_reward;
        if (is_reward) {
            PlotSeries s;
            s.name = t.rows.empty() ? path.stem().string() : column_strings(t, "variant").front();
            s.x = column_numbers(t, "t");
            s.y = column_numbers(t, "reward_mean");
            const auto steps = column_numbers(t, "step");
            if (spec.vertical_markers.empty())
                for (std::size_t k = 1; k < steps.size(); ++k)
                    if (steps[k] == 0) spec.vertical_markers.push_back(s.x[k] - 0.5);
            spec.series.push_back(std::move(s));
        } else {
            const auto frames = column_numbers(t, "frames"), episode = column_numbers(t, "episode"),
                       ret = column_numbers(t, "return_mean"), beta = column_numbers(t, "beta");
            const auto variant = column_strings(t, "variant");
            const double last = episode.empty() ? 0 : *std::max_element(episode.begin(), episode.end());
            const double want = opt.episode ? static_cast<double>(*opt.episode) : last;
            std::map<std::string, std::map<double, std::pair<double, std::size_t>>> groups;
            for (std::size_t k = 0; k < frames.size(); ++k) {
                if (episode[k] != want) continue;
                auto name = variant[k];
                if (variant[k] != "PPO") name += " beta=" + format_number(beta[k]);
                auto& cell = groups[name][frames[k]];
                cell.first += ret[k];
                cell.second += 1;
            }
            if (groups.empty())
                throw ValueError("plot: " + path.string() + " has no rows for episode " + format_number(want));
            for (auto& [name, pts] : groups) {
                PlotSeries s;
                s.name = name;
                for (auto& [x, acc] : pts) {
                    s.x.push_back(x);
                    s.y.push_back(acc.first / static_cast<double>(acc.second));
                }
                auto same = std::find_if(spec.series.begin(), spec.series.end(), [&](auto& o) { return o.name == s.name; });
                if (same != spec.series.end()) s.name += " (" + path.stem().string() + ")";
                spec.series.push_back(std::move(s));
            }
        }
    }
    if (*reward_kind) {
        spec.x_label = "timestep";
        spec.y_label = "reward";
        if (spec.title.empty()) spec.title = "Per-timestep reward";
    } else {
        spec.x_label = "frames";
        spec.y_label = opt.episode ? "return at episode " + std::to_string(*opt.episode) : "return at last episode";
        if (spec.title.empty()) spec.title = "Learning curve";
    }
    return spec;
}

inline void cmd_plot(const std::vector<fs::path>& inputs, const fs::path& out_svg, const PlotOptions& opt, bool force) {
    auto spec = plot_spec_from_csvs(inputs, opt);
    guard_outputs({out_svg}, force);
    if (out_svg.has_parent_path()) fs::create_directories(out_svg.parent_path());
    write_svg(out_svg, spec);
}

/// Greedy per-timestep rewards on the config's evaluation tasks.
inline RewardCurve evaluate_checkpoint(const ExperimentConfig& cfg, const MetaEnv& env, LoadedCheckpoint& ck,
                                       std::uint64_t seed) {
    if (!ck.policy) throw ConfigError("eval: checkpoint holds no policy");
    const auto tasks = cfg.agent.fixed_task ? std::vector<TaskSpec>(cfg.agent.eval_tasks, *cfg.agent.fixed_task)
                                            : evaluation_tasks(env, cfg.agent.eval_tasks, seed);
    Rng rng = make_rng(seed, Stream::Evaluation, 0xe7a1);
    return reward_curve(env, tasks, greedy_agent(env, ck.model ? &*ck.model : nullptr, *ck.policy), rng);
}

inline void cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out, bool force,
                     std::ostream& log) {
    auto env = cfg.make_env();
    auto ck = load_checkpoint(cfg, *env, checkpoint);
    const fs::path learning = checkpoint.parent_path() / "learning_curve.csv";
    std::vector<fs::path> outputs{out / "reward_curve.csv", out / "reward_curve.svg", out / "returns.csv"};
    if (fs::exists(learning)) outputs.push_back(out / "learning_curve.svg");
    guard_outputs(outputs, force);
    fs::create_directories(out);
    auto curve = evaluate_checkpoint(cfg, *env, ck, cfg.seeds.front());
    const std::string variant = to_string(cfg.agent.variant);
    write_csv(out / "reward_curve.csv", reward_curve_table(curve, variant));
    CsvTable returns{{"variant", "episode", "return_mean", "return_std"}, {}};
    for (std::size_t k = 0; k < curve.episodes; ++k)
        returns.add_row({variant, std::to_string(k + 1), format_number(curve.episode_return_mean[k]),
                         format_number(curve.episode_return_std[k])});
    write_csv(out / "returns.csv", returns);
    write_svg(out / "reward_curve.svg", plot_spec_from_csvs({out / "reward_curve.csv"}, {}));
    if (fs::exists(learning)) write_svg(out / "learning_curve.svg", plot_spec_from_csvs({learning}, {}));
    log << "return by episode:";
    for (double r : curve.episode_return_mean) log << ' ' << format_number(r);
    log << '\n';
}

/// ChainWorld only: compares a logistic readout of the trained belief with the
/// exact Bayes filter at every step.
inline std::vector<ReadoutRow> cmd_oracle_check(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                                const fs::path& out, bool force, std::ostream& log) {
    if (cfg.env != EnvId::ChainWorld)
        throw ConfigError("oracle-check: the exact filter exists only for ChainWorld, config has " + to_string(cfg.env));
    auto env = cfg.make_env();
    auto ck = load_checkpoint(cfg, *env, checkpoint);
    if (!ck.model) throw ConfigError("oracle-check: checkpoint holds no model");
    guard_outputs({out / "oracle_check.csv"}, force);
    fs::create_directories(out);
    Rng rng = make_rng(cfg.seeds.front(), Stream::Probe, 1);
    auto fit = collect_explorer_trajectories(*env, cfg.oracle.fit_trajectories, cfg.oracle.epsilon, rng);
    auto test = collect_explorer_trajectories(*env, cfg.oracle.test_trajectories, cfg.oracle.epsilon, rng);
    std::vector<std::size_t> steps(env->config().length());
    std::iota(steps.begin(), steps.end(), 0);
    ProbeConfig pc;
    pc.l2 = cfg.probe.l2;
    auto rows = belief_readout(*ck.model, chainworld_spec(), fit, test, steps, pc);
    write_csv(out / "oracle_check.csv", readout_table(rows));
    const auto& at_h = rows.at(cfg.meta.horizon - 1);
    log << "end of first episode: readout " << format_number(at_h.readout_accuracy) << "%, exact "
        << format_number(at_h.exact_accuracy) << "%, agreement " << format_number(at_h.agreement) << "%\n";
    return rows;
}

} // namespace disbelief
