// hkv: serve, replay, sweep, generate, bench and inspect-index over one shared config.

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hkv/bench.hpp"
#include "hkv/engine.hpp"
#include "hkv/replay.hpp"
#include "hkv/server.hpp"
#include "hkv/workload.hpp"

namespace {

/// --config plus one flag per EngineConfig field; flags win over the file.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;

    void attach(CLI::App& app)
    {
        app.add_option("--config", config_path, "flat key = value config file");
        for (const auto& name : hkv::EngineConfig::field_names()) {
            if (name == "seed") {
                continue;
            }
            std::string flag = "--" + name;
            for (auto& c : flag) {
                c = c == '_' ? '-' : c;
            }
            app.add_option_function<std::string>(
                flag, [this, name](const std::string& v) { overrides[name] = v; }, "config field " + name);
        }
        app.add_option_function<std::uint64_t>(
            "--seed",
            [this](std::uint64_t v) {
                seed = v;
                seed_given = true;
            },
            "RNG seed");
    }

    hkv::EngineConfig build() const
    {
        hkv::EngineConfig c = config_path.empty() ? hkv::EngineConfig{} : hkv::EngineConfig::load(config_path);
        for (const auto& [name, value] : overrides) {
            c.set(name, value);
        }
        if (seed_given) {
            c.seed = seed;
        }
        c.validate();
        return c;
    }
};

void write_json(const std::string& path, const nlohmann::ordered_json& j)
{
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) {
        throw hkv::Error(hkv::ErrorCode::io_error, "cannot write " + path);
    }
}

int serve(const hkv::EngineConfig& config, const std::string& listen, const std::string& flash_file,
          bool deterministic, unsigned workers)
{
    hkv::EngineOptions opts;
    opts.deterministic = deterministic;
    opts.flash_file = flash_file;
    hkv::Engine engine(config, opts);
    if (!deterministic) {
        engine.start_cleaner();
    }

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    hkv::Server server(engine, {hkv::parse_listen(listen), workers});
    server.start();
    std::cerr << "hkv listening on " << server.port() << " (" << workers << " workers)\n";
    int sig = 0;
    sigwait(&signals, &sig);
    std::cerr << "hkv: signal " << sig << ", shutting down\n";
    server.stop();
    engine.stop_cleaner();
    std::cerr << engine.report().to_json().dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"hybrid DRAM + flash key-value cache"};
    app.require_subcommand(1);

    ConfigFlags serve_cfg;
    std::string listen = "127.0.0.1:11211";
    std::string flash_file;
    bool deterministic = false;
    unsigned workers = 4;
    auto* serve_cmd = app.add_subcommand(
        "serve",
        "memcached text protocol server (get, set, delete, stats, quit).\n"
        "NOTE: set flags are accepted but NOT stored; get always reports flags 0.\n"
        "NOTE: exptime is parsed and IGNORED; nothing ever expires.\n"
        "Keys of the form tenant:key are accounted to that tenant.");
    serve_cfg.attach(*serve_cmd);
    serve_cmd->add_option("--listen", listen, "host:port")->capture_default_str();
    serve_cmd->add_option("--flash-file", flash_file, "flash backing file (default: in memory)");
    serve_cmd->add_flag("--deterministic", deterministic, "run maintenance inline after each request");
    serve_cmd->add_option("--workers", workers, "request worker threads")->capture_default_str();

    ConfigFlags replay_cfg;
    std::string trace_path;
    std::string policy = "flashield";
    std::string report_path;
    bool no_fill = false;
    auto* replay_cmd = app.add_subcommand("replay", "replay a trace under one policy and emit a JSON report");
    replay_cfg.attach(*replay_cmd);
    replay_cmd->add_option("--trace", trace_path, "CSV trace")->required();
    replay_cmd->add_option("--policy", policy, "flashield | victim | ripq8 | dram_lru_oracle")->capture_default_str();
    replay_cmd->add_option("--report", report_path, "output JSON (default stdout)");
    replay_cmd->add_flag("--no-fill", no_fill, "do not store objects after get misses");

    ConfigFlags sweep_cfg;
    std::string sweep_trace;
    std::string sweep_param = "threshold";
    std::vector<std::string> sweep_values;
    std::string sweep_policy = "flashield";
    std::string sweep_report;
    std::uint64_t sweep_total = 0;
    auto* sweep_cmd = app.add_subcommand("sweep", "replay one trace per setting and print a comparison table");
    sweep_cfg.attach(*sweep_cmd);
    sweep_cmd->add_option("--trace", sweep_trace, "CSV trace")->required();
    sweep_cmd->add_option("--param", sweep_param, "threshold | ratio | policy")->capture_default_str();
    sweep_cmd->add_option("--values", sweep_values,
                          "thresholds (1 10 100), flash-per-DRAM ratios (15 7 3) or policy names")
        ->required();
    sweep_cmd->add_option("--policy", sweep_policy, "policy for threshold and ratio sweeps")->capture_default_str();
    sweep_cmd->add_option("--total-bytes", sweep_total, "DRAM + flash for ratio sweeps (default: from config)");
    sweep_cmd->add_option("--report", sweep_report, "also write the reports as a JSON array");

    std::string spec_path;
    std::string out_path;
    std::uint64_t gen_seed = 1;
    std::uint64_t gen_ops = 0;
    std::uint64_t gen_keys = 0;
    auto* gen_cmd = app.add_subcommand("generate", "write a synthetic trace");
    gen_cmd->add_option("--spec", spec_path, "workload JSON (default: production-calibrated mix)");
    gen_cmd->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
    gen_cmd->add_option("--out", out_path, "output CSV")->required();
    gen_cmd->add_option("--ops", gen_ops, "override op_count");
    gen_cmd->add_option("--keys", gen_keys, "override key_count");

    ConfigFlags bench_cfg;
    std::string bench_flash_file;
    std::string pattern = "dram";
    hkv::BenchOptions bench_opts;
    auto* bench_cmd = app.add_subcommand("bench", "sequential-key latency microbenchmark (informational)");
    bench_cfg.attach(*bench_cmd);
    bench_cmd->add_option("--pattern", pattern, "dram | flash")->capture_default_str();
    bench_cmd->add_option("--ops", bench_opts.ops, "measured gets")->capture_default_str();
    bench_cmd->add_option("--keys", bench_opts.keys, "key space (0 = from pattern)");
    bench_cmd->add_option("--value-size", bench_opts.value_size, "value bytes")->capture_default_str();
    bench_cmd->add_option("--flash-file", bench_flash_file, "flash backing file (default: in memory)");

    ConfigFlags inspect_cfg;
    std::string inspect_trace;
    auto* inspect_cmd = app.add_subcommand("inspect-index", "print flash index footprint, optionally after a replay");
    inspect_cfg.attach(*inspect_cmd);
    inspect_cmd->add_option("--trace", inspect_trace, "replay this trace first");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd) {
            return serve(serve_cfg.build(), listen, flash_file, deterministic, workers);
        }
        if (*replay_cmd) {
            const hkv::EngineConfig config = replay_cfg.build();
            const auto events = hkv::load_trace(trace_path);
            hkv::ReplayOptions ro;
            ro.fill_on_miss = !no_fill;
            ro.seed = config.seed;
            const auto report = hkv::replay(events, hkv::parse_policy(policy), config, ro);
            write_json(report_path, report.to_json());
            return 0;
        }
        if (*sweep_cmd) {
            const hkv::EngineConfig config = sweep_cfg.build();
            const auto events = hkv::load_trace(sweep_trace);
            hkv::ReplayOptions ro;
            ro.seed = config.seed;
            std::vector<hkv::MetricsReport> reports;
            auto numbers = [&] {
                std::vector<std::uint64_t> out;
                for (const auto& v : sweep_values) {
                    out.push_back(std::stoull(v));
                }
                return out;
            };
            if (sweep_param == "threshold") {
                std::vector<std::uint32_t> thresholds;
                for (auto n : numbers()) {
                    thresholds.push_back(static_cast<std::uint32_t>(n));
                }
                reports = hkv::sweep(events, hkv::parse_policy(sweep_policy), hkv::threshold_points(config, thresholds), ro);
            } else if (sweep_param == "ratio") {
                const std::uint64_t total = sweep_total ? sweep_total : config.dram_capacity + config.flash_capacity;
                reports = hkv::sweep(events, hkv::parse_policy(sweep_policy), hkv::ratio_points(config, total, numbers()), ro);
            } else if (sweep_param == "policy") {
                for (const auto& name : sweep_values) {
                    reports.push_back(hkv::replay(events, hkv::parse_policy(name), config, ro));
                }
            } else {
                throw hkv::Error(hkv::ErrorCode::invalid_config, "unknown sweep parameter '" + sweep_param + "'");
            }
            std::cout << hkv::comparison_table(reports);
            if (!sweep_report.empty()) {
                nlohmann::ordered_json j = nlohmann::ordered_json::array();
                for (const auto& r : reports) {
                    j.push_back(r.to_json());
                }
                write_json(sweep_report, j);
            }
            return 0;
        }
        if (*gen_cmd) {
            hkv::WorkloadSpec spec = spec_path.empty() ? hkv::WorkloadSpec::production_mix() : hkv::WorkloadSpec::load(spec_path);
            if (gen_ops) {
                spec.op_count = gen_ops;
            }
            if (gen_keys) {
                spec.key_count = gen_keys;
            }
            hkv::WorkloadGenerator gen(spec, gen_seed);
            hkv::save_trace(out_path, gen.generate());
            const auto& s = gen.stats();
            std::cerr << "wrote " << spec.op_count << " events: " << s.gets << " gets, " << s.fresh_writes
                      << " fresh writes (" << s.unread_writes << " never read), " << s.updates << " updates, mean size "
                      << s.mean_size << " B\n";
            return 0;
        }
        if (*bench_cmd) {
            bench_opts.pattern = hkv::parse_bench_pattern(pattern);
            hkv::EngineOptions eo;
            eo.flash_file = bench_flash_file;
            hkv::Engine engine(bench_cfg.build(), eo);
            write_json("", hkv::run_bench(engine, bench_opts).to_json());
            return 0;
        }
        if (*inspect_cmd) {
            const hkv::EngineConfig config = inspect_cfg.build();
            hkv::EnginePolicy policy_engine(config);
            if (!inspect_trace.empty()) {
                hkv::replay(hkv::load_trace(inspect_trace), policy_engine);
            }
            const auto f = policy_engine.engine().footprint();
            const auto s = policy_engine.engine().index().stats();
            nlohmann::ordered_json j;
            j["slots"] = policy_engine.engine().index().slot_count();
            j["table_bytes"] = f.table_bytes;
            j["bloom_bytes"] = f.bloom_bytes;
            j["live_objects"] = f.live_objects;
            j["live_segments"] = policy_engine.engine().index().live_segment_count();
            j["bytes_per_live_object"] = f.bytes_per_live_object;
            j["table_bytes_per_live_object"] = f.table_bytes_per_live_object;
            j["bloom_bits_per_live_object"] = f.bloom_bits_per_live_object;
            j["lookups"] = s.lookups;
            j["lookup_hits"] = s.lookup_hits;
            j["lookup_flash_reads"] = s.lookup_flash_reads;
            j["displaced"] = s.displaced;
            write_json("", j);
            return 0;
        }
    } catch (const hkv::Error& e) {
        std::cerr << "hkv: " << e.what() << "\n";
        return e.code() == hkv::ErrorCode::invalid_config ? 2 : 1;
    }
    return 0;
}
