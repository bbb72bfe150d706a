// Command-line surface over the trajectory-synthesis library: one
// subcommand per pipeline stage plus the verification utilities.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fctraj/contamination.hpp"
#include "fctraj/node_ops.hpp"
#include "fctraj/parallel.hpp"
#include "fctraj/pipeline.hpp"
#include "fctraj/training_losses.hpp"

using namespace fctraj;
using nlohmann::json;

namespace {

struct common_http {
    http_backend_config cfg;
    void attach(CLI::App* sub) {
        sub->add_option("--http-host", cfg.host, "Chat-completion endpoint host");
        sub->add_option("--http-port", cfg.port, "Endpoint port");
        sub->add_option("--http-path", cfg.path, "Endpoint path");
        sub->add_option("--http-model", cfg.model, "Model name");
        sub->add_option("--token-env", cfg.token_env, "Env var holding the API token");
        sub->add_flag_callback("--no-tls", [this] { cfg.use_tls = false; }, "Plain HTTP");
    }
};

std::filesystem::path split_stream_path(const std::filesystem::path& out) {
    std::filesystem::path p = out;
    std::string ext = p.extension().string();
    p.replace_extension();
    p += ".split" + ext;
    return p;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"multi-turn function-calling trajectory synthesis"};
    app.require_subcommand(1);

    // ---- build-graph ----
    auto* build = app.add_subcommand("build-graph", "Build local dependency graphs");
    std::string pool_path, out_path, judge_kind = "mock";
    uint64_t seed = 1;
    size_t k_cand = 30, jobs = std::thread::hardware_concurrency();
    double density = 0.35;
    bool cross_category = false;
    common_http build_http;
    build->add_option("--pool", pool_path, "Pool JSON file")->required();
    build->add_option("--out", out_path, "Output graph JSON")->required();
    build->add_option("--seed", seed, "Random seed");
    build->add_option("--judge", judge_kind, "llm|mock")->check(CLI::IsMember({"llm", "mock"}));
    build->add_option("--k-cand", k_cand, "Candidate neighbors per target");
    build->add_option("--density", density, "Mock judge edge density");
    build->add_flag("--cross-category", cross_category, "Sample candidates pool-wide");
    build->add_option("--jobs", jobs, "Worker threads");
    build_http.attach(build);
    build->callback([&] {
        function_pool pool = load_pool(pool_path);
        graph_config gc{k_cand, cross_category, jobs};
        graph_set graphs;
        if (judge_kind == "llm") {
            http_chat_backend backend(build_http.cfg);
            llm_dependency_judge judge(backend);
            graphs = build_graph_set(pool, judge, gc, derive_seed(seed, "graph"));
        } else {
            hash_dependency_judge judge(derive_seed(seed, "depjudge"), density);
            graphs = build_graph_set(pool, judge, gc, derive_seed(seed, "graph"));
        }
        save_graph_set(graphs, out_path);
        std::cout << json{{"graphs", graphs.size()}}.dump() << "\n";
    });

    // ---- sample-fsp ----
    auto* sample = app.add_subcommand("sample-fsp", "Random-walk initial FSPs");
    std::string graphs_path, fsp_out;
    sampler_config sc;
    sample->add_option("--graphs", graphs_path, "Graph JSON")->required();
    sample->add_option("--steps", sc.steps, "Walk steps");
    sample->add_option("--count", sc.count, "FSPs to sample")->required();
    sample->add_option("--min-turns", sc.min_turns, "Discard shorter walks");
    sample->add_option("--out", fsp_out, "Output FSP JSONL")->required();
    sample->add_option("--seed", seed, "Random seed");
    sample->callback([&] {
        graph_set graphs = load_graph_set(graphs_path);
        std::vector<fsp> paths = sample_fsps(graphs, sc, derive_seed(seed, "fsp"));
        save_fsps(paths, fsp_out);
        std::cout << json{{"fsps", paths.size()}}.dump() << "\n";
    });

    // ---- enhance ----
    auto* enh = app.add_subcommand("enhance", "Apply Merge/Insert/Split node ops");
    std::string in_path, enhance_out, nested_kind = "mock";
    node_ops_config noc;
    double nested_density = 0.5;
    common_http enh_http;
    enh->add_option("--in", in_path, "Input FSP JSONL")->required();
    enh->add_option("--pool", pool_path, "Pool JSON file")->required();
    enh->add_option("--graphs", graphs_path, "Graph JSON")->required();
    enh->add_option("--out", enhance_out, "Output JSONL (a .split sibling is also written)")
        ->required();
    enh->add_option("--merge-p", noc.merge_p, "Merge probability");
    enh->add_option("--q-long", noc.q_long, "Long-dependency insertion probability");
    enh->add_option("--judge", nested_kind, "llm|mock")->check(CLI::IsMember({"llm", "mock"}));
    enh->add_option("--nested-density", nested_density, "Mock nested-judge density");
    enh->add_option("--seed", seed, "Random seed");
    enh_http.attach(enh);
    enh->callback([&] {
        function_pool pool = load_pool(pool_path);
        graph_set graphs = load_graph_set(graphs_path);
        std::vector<fsp> paths = load_fsps(in_path);
        std::unique_ptr<chat_backend> http;
        std::unique_ptr<nested_judge> judge;
        if (nested_kind == "llm") {
            http = std::make_unique<http_chat_backend>(enh_http.cfg);
            judge = std::make_unique<llm_nested_judge>(*http);
        } else {
            judge = std::make_unique<hash_nested_judge>(derive_seed(seed, "nestjudge"),
                                                        nested_density);
        }
        std::vector<fsp> phis, phihats;
        for (size_t i = 0; i < paths.size(); ++i) {
            rng64 rng(derive_seed(seed, "ops", i));
            auto [phi, phihat] = enhance(paths[i], graphs, pool, *judge, noc, rng);
            phis.push_back(std::move(phi));
            phihats.push_back(std::move(phihat));
        }
        save_fsps(phis, enhance_out);
        save_fsps(phihats, split_stream_path(enhance_out));
        std::cout << json{{"enhanced", phis.size()}, {"with_miss", phihats.size()}}.dump() << "\n";
    });

    // ---- translate ----
    auto* trans = app.add_subcommand("translate", "Back-and-forth translation");
    std::string backend_kind = "mock", trans_out;
    translate_config tc;
    double error_rate = 0.0;
    common_http trans_http;
    trans->add_option("--in", in_path, "Input FSP JSONL")->required();
    trans->add_option("--pool", pool_path, "Pool JSON file")->required();
    trans->add_option("--backend", backend_kind, "llm|mock")
        ->check(CLI::IsMember({"llm", "mock"}));
    trans->add_option("--out", trans_out, "Output instance JSONL")->required();
    trans->add_option("--min-turns", tc.min_turns, "Drop shorter instances");
    trans->add_option("--error-rate", error_rate, "Simulated executor error injection");
    trans->add_option("--seed", seed, "Random seed");
    trans->add_option("--jobs", jobs, "Worker threads");
    trans_http.attach(trans);
    trans->callback([&] {
        function_pool pool = load_pool(pool_path);
        std::vector<fsp> paths = load_fsps(in_path);
        simulated_executor_config xc;
        xc.seed = derive_seed(seed, "exec");
        xc.error_rate = error_rate;
        std::unique_ptr<chat_backend> http;
        if (backend_kind == "llm") http = std::make_unique<http_chat_backend>(trans_http.cfg);
        auto results = parallel_map(paths, jobs, [&](const fsp& p, size_t i) {
            simulated_executor exec(xc);
            translate_result r;
            if (http) {
                llm_translation_backend backend(*http);
                r = translate_fsp(p, pool, backend, exec, tc);
            } else {
                mock_translation_backend backend;
                r = translate_fsp(p, pool, backend, exec, tc);
            }
            if (r.instance) r.instance->id = "inst-" + std::to_string(i);
            return r;
        });
        std::vector<translation_instance> kept;
        size_t drops = 0;
        for (auto& r : results) {
            if (r.instance) {
                kept.push_back(std::move(*r.instance));
            } else {
                ++drops;
            }
        }
        save_instances(kept, trans_out);
        std::cout << json{{"instances", kept.size()}, {"dropped", drops}}.dump() << "\n";
    });

    // ---- distill ----
    auto* dist = app.add_subcommand("distill", "Hint-based context distillation");
    std::string teacher_kind = "mock", student_kind = "mock", judge_role = "mock";
    std::string traj_out, pairs_out;
    bool negatives = false;
    distill_config dc;
    double wrong_rate = 0.35;
    common_http dist_http;
    dist->add_option("--in", in_path, "Input instance JSONL")->required();
    dist->add_option("--pool", pool_path, "Pool JSON file")->required();
    dist->add_option("--teacher", teacher_kind, "llm|mock")
        ->check(CLI::IsMember({"llm", "mock"}));
    dist->add_option("--student", student_kind, "llm|mock")
        ->check(CLI::IsMember({"llm", "mock"}));
    dist->add_option("--judge", judge_role, "llm|mock")->check(CLI::IsMember({"llm", "mock"}));
    dist->add_flag("--negatives", negatives, "Mine negative hints and emit pairs");
    dist->add_option("--rollouts", dc.rollouts, "Student rollouts per instance");
    dist->add_option("--wrong-rate", wrong_rate, "Mock student corruption rate");
    dist->add_flag("--substep-split", dc.substep_split, "One call per assistant step");
    dist->add_option("--out", traj_out, "Output trajectory JSONL")->required();
    dist->add_option("--pairs-out", pairs_out, "Output pair JSONL");
    dist->add_option("--seed", seed, "Random seed");
    dist->add_option("--jobs", jobs, "Worker threads");
    dist_http.attach(dist);
    dist->callback([&] {
        function_pool pool = load_pool(pool_path);
        std::vector<translation_instance> instances = load_instances(in_path);
        if (!negatives) dc.rollouts = 0;
        simulated_executor_config xc;
        xc.seed = derive_seed(seed, "exec");
        std::unique_ptr<chat_backend> http_teacher, http_student, http_judge;
        if (teacher_kind == "llm") http_teacher = std::make_unique<http_chat_backend>(dist_http.cfg);
        if (student_kind == "llm") http_student = std::make_unique<http_chat_backend>(dist_http.cfg);
        if (judge_role == "llm") http_judge = std::make_unique<http_chat_backend>(dist_http.cfg);
        auto outcomes =
            parallel_map(instances, jobs, [&](const translation_instance& inst, size_t) {
                simulated_executor exec(xc);
                hint_following_backend mock_teacher(dc.substep_split);
                comparing_judge_backend mock_judge;
                scripted_student_backend mock_student(inst, derive_seed(seed, "student"),
                                                      wrong_rate);
                chat_backend& teacher =
                    http_teacher ? *http_teacher : static_cast<chat_backend&>(mock_teacher);
                chat_backend* student =
                    negatives ? (http_student ? http_student.get()
                                              : static_cast<chat_backend*>(&mock_student))
                              : nullptr;
                chat_backend* judge = negatives
                                          ? (http_judge ? http_judge.get()
                                                        : static_cast<chat_backend*>(&mock_judge))
                                          : nullptr;
                return distill_instance(inst, pool, teacher, student, judge, exec, dc);
            });
        std::vector<trajectory> positives;
        std::vector<trajectory_pair> pairs;
        size_t drops = 0;
        for (auto& o : outcomes) {
            if (!o.positive) {
                ++drops;
                continue;
            }
            positives.push_back(std::move(*o.positive));
            if (o.pair) pairs.push_back(std::move(*o.pair));
        }
        save_trajectories(positives, traj_out);
        if (!pairs_out.empty()) save_pairs(pairs, pairs_out);
        std::cout << json{{"trajectories", positives.size()},
                          {"pairs", pairs.size()},
                          {"dropped", drops}}
                         .dump()
                  << "\n";
    });

    // ---- mix ----
    auto* mixcmd = app.add_subcommand("mix", "Assemble the final data mixture");
    mixture_config mc;
    std::string mix_in, mix_out, manifest_out;
    mixcmd->add_option("--in", mix_in, "Typed trajectory JSONL")->required();
    mixcmd->add_option("--single", mc.n_single_turn, "Single-turn count")->required();
    mixcmd->add_option("--multi", mc.n_multi_turn, "Multi-turn count")->required();
    mixcmd->add_option("--irrelevance", mc.n_irrelevance, "Irrelevance count")->required();
    mixcmd->add_option("--out", mix_out, "Output dataset JSONL")->required();
    mixcmd->add_option("--manifest", manifest_out, "Manifest JSON path");
    mixcmd->add_option("--seed", mc.seed, "Random seed");
    mixcmd->callback([&] {
        std::vector<trajectory> all = load_trajectories(mix_in);
        std::map<std::string, std::vector<trajectory>> by_type;
        for (auto& t : all) by_type[t.type].push_back(std::move(t));
        mixture_result result = mix(by_type, mc);
        save_trajectories(result.dataset, mix_out);
        json manifest = manifest_to_json(result.manifest);
        if (!manifest_out.empty()) {
            std::ofstream f(manifest_out);
            f << manifest.dump(2) << "\n";
        }
        std::cout << json{{"total", result.dataset.size()},
                          {"irrelevance_ratio_percent", mixture_ratio_rounded(mc)}}
                         .dump()
                  << "\n";
    });

    // ---- stats ----
    auto* statscmd = app.add_subcommand("stats", "Dataset statistics");
    std::string stats_in, stats_pairs;
    statscmd->add_option("--in", stats_in, "Dataset JSONL")->required();
    statscmd->add_option("--pairs", stats_pairs, "Preference-pair JSONL");
    statscmd->callback([&] {
        std::vector<trajectory> dataset = load_trajectories(stats_in);
        std::vector<trajectory_pair> pairs;
        if (!stats_pairs.empty()) pairs = load_pairs(stats_pairs);
        std::cout << stats_to_json(compute_stats(dataset, pairs)).dump(2) << "\n";
    });

    // ---- contaminate ----
    auto* cont = app.add_subcommand("contaminate", "FSP-level contamination metrics");
    std::string train_path, test_path;
    size_t ngram_n = 2;
    cont->add_option("--train", train_path, "Train FSP JSONL")->required();
    cont->add_option("--test", test_path, "Test FSP JSONL")->required();
    cont->add_option("--n", ngram_n, "n-gram size");
    cont->callback([&] {
        auto train = load_token_sequences(train_path);
        auto test = load_token_sequences(test_path);
        std::cout << report_to_json(contamination_between(train, test, ngram_n)).dump(2) << "\n";
    });

    // ---- loss-check ----
    auto* loss = app.add_subcommand("loss-check", "Verify the loss math on a toy instance");
    std::string instances_path, form_name = "log-ratio";
    loss_config lc;
    double fd_step = 1e-5, fd_threshold = 1e-4;
    loss->add_option("--instances", instances_path, "Toy instance JSON")->required();
    loss->add_option("--form", form_name, "log-ratio|as-printed")
        ->check(CLI::IsMember({"log-ratio", "as-printed"}));
    loss->add_option("--eta", lc.eta, "Sigmoid scale");
    loss->add_option("--lambda", lc.lambda, "mDPO weight");
    loss->add_option("--fd-step", fd_step, "Finite-difference step");
    loss->callback([&] {
        lc.form = form_name == "as-printed" ? mdpo_form::as_printed : mdpo_form::log_ratio;
        toy_instance inst = load_toy_instance(instances_path);

        // sigma(0) anchor: theta == ref makes the inner term vanish.
        loss_config anchor = lc;
        for (mdpo_form form : {mdpo_form::log_ratio, mdpo_form::as_printed}) {
            anchor.form = form;
            double v = mdpo_loss(inst.ref, inst.ref, inst.pairs.front(), anchor);
            std::printf("ln2 anchor (%s): %.15f\n",
                        form == mdpo_form::log_ratio ? "log-ratio" : "as-printed", v);
        }

        double worst = 0.0;
        for (const auto& pair : inst.pairs) {
            auto analytic = grad_combined(inst.theta, inst.ref, pair, lc);
            auto fd = fd_grad_combined(inst.theta, inst.ref, pair, lc, fd_step);
            worst = std::max(worst, max_relative_error(analytic, fd));
        }
        std::printf("fd max relative error over %zu pairs: %.3e (threshold %.0e)\n",
                    inst.pairs.size(), worst, fd_threshold);
        for (const auto& pair : inst.pairs) {
            std::printf("combined loss: %.12f\n", combined_loss(inst.theta, inst.ref, pair, lc));
        }
        if (worst >= fd_threshold) {
            throw validation_error("finite-difference check failed");
        }
    });

    // ---- run ----
    auto* runcmd = app.add_subcommand("run", "Full pipeline from a config file");
    std::string config_path;
    size_t run_jobs = 0;
    runcmd->add_option("--config", config_path, "Pipeline config JSON")->required();
    runcmd->add_option("--jobs", run_jobs, "Override worker threads");
    runcmd->add_option("--seed", seed, "Override seed")->default_val(0);
    runcmd->callback([&] {
        pipeline_config cfg = load_pipeline_config(config_path);
        if (run_jobs > 0) cfg.jobs = run_jobs;
        if (seed > 0) cfg.seed = seed;
        run_report report = run_pipeline(cfg);
        std::cout << run_report_to_json(report).dump(2) << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const transport_error& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return 3;
    } catch (const protocol_error& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return 3;
    } catch (const parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
