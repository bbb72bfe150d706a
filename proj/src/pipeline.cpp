#include "fctraj/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fctraj/contamination.hpp"
#include "fctraj/node_ops.hpp"
#include "fctraj/parallel.hpp"

namespace fctraj {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex64(uint64_t h) {
    static const char* alphabet = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = alphabet[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

class checkpoint_store {
public:
    static checkpoint_store load(const fs::path& path) {
        checkpoint_store store;
        store.path_ = path;
        if (fs::exists(path)) {
            try {
                store.data_ = json::parse(read_file(path));
            } catch (const json::parse_error&) {
                store.data_ = json::object();  // corrupt checkpoint: rebuild
            }
        } else {
            store.data_ = json::object();
        }
        return store;
    }

    bool valid(const std::string& stage, const std::string& config_hash,
               const std::vector<fs::path>& outputs) const {
        if (!data_.contains(stage)) return false;
        const json& entry = data_.at(stage);
        if (entry.value("config_hash", "") != config_hash) return false;
        for (const auto& out : outputs) {
            if (!fs::exists(out)) return false;
            std::string name = out.filename().string();
            if (!entry.contains("outputs") || !entry.at("outputs").contains(name)) return false;
            if (entry.at("outputs").at(name).get<std::string>() != file_hash(out)) return false;
        }
        return true;
    }

    void record(const std::string& stage, const std::string& config_hash,
                const std::vector<fs::path>& outputs) {
        json out_hashes = json::object();
        for (const auto& out : outputs) out_hashes[out.filename().string()] = file_hash(out);
        data_[stage] = {{"config_hash", config_hash}, {"outputs", std::move(out_hashes)}};
        std::ofstream f(path_);
        if (!f) throw validation_error("cannot write " + path_.string());
        f << data_.dump(2) << "\n";
    }

private:
    fs::path path_;
    json data_;
};

std::unique_ptr<chat_backend> make_http_backend(const pipeline_config& cfg) {
    return std::make_unique<http_chat_backend>(cfg.http);
}

}  // namespace

pipeline_config config_from_json(const json& j) {
    pipeline_config cfg;
    cfg.pool_path = j.value("pool", "");
    cfg.out_dir = j.value("out_dir", "");
    cfg.seed = j.value("seed", uint64_t{1});
    cfg.jobs = j.value("jobs", size_t{1});
    if (j.contains("graph")) {
        const json& g = j.at("graph");
        cfg.k_cand = g.value("k_cand", cfg.k_cand);
        cfg.cross_category = g.value("cross_category", cfg.cross_category);
        cfg.graph_judge = g.value("judge", cfg.graph_judge);
        cfg.edge_density = g.value("edge_density", cfg.edge_density);
    }
    if (j.contains("fsp")) {
        const json& f = j.at("fsp");
        cfg.steps = f.value("steps", cfg.steps);
        cfg.fsp_count = f.value("count", cfg.fsp_count);
        cfg.min_turns = f.value("min_turns", cfg.min_turns);
    }
    if (j.contains("node_ops")) {
        const json& n = j.at("node_ops");
        cfg.merge_p = n.value("merge_p", cfg.merge_p);
        cfg.q_long = n.value("q_long", cfg.q_long);
        cfg.nested_judge_kind = n.value("judge", cfg.nested_judge_kind);
        cfg.nested_density = n.value("nested_density", cfg.nested_density);
    }
    if (j.contains("translate")) {
        const json& t = j.at("translate");
        cfg.translate_backend = t.value("backend", cfg.translate_backend);
        cfg.error_rate = t.value("error_rate", cfg.error_rate);
        cfg.singles_count = t.value("singles", cfg.singles_count);
    }
    if (j.contains("distill")) {
        const json& d = j.at("distill");
        cfg.teacher = d.value("teacher", cfg.teacher);
        cfg.student = d.value("student", cfg.student);
        cfg.judge = d.value("judge", cfg.judge);
        cfg.negatives = d.value("negatives", cfg.negatives);
        cfg.rollouts = d.value("rollouts", cfg.rollouts);
        cfg.student_wrong_rate = d.value("student_wrong_rate", cfg.student_wrong_rate);
        cfg.substep_split = d.value("substep_split", cfg.substep_split);
    }
    if (j.contains("postprocess")) {
        const json& p = j.at("postprocess");
        if (p.contains("keywords")) cfg.keywords = p.at("keywords").get<std::vector<std::string>>();
        cfg.shuffle = p.value("shuffle", cfg.shuffle);
        cfg.irrelevance_count = p.value("irrelevance", cfg.irrelevance_count);
    }
    if (j.contains("mix")) {
        const json& m = j.at("mix");
        cfg.mix_single = m.value("single", cfg.mix_single);
        cfg.mix_multi = m.value("multi", cfg.mix_multi);
        cfg.mix_irrelevance = m.value("irrelevance", cfg.mix_irrelevance);
    }
    if (j.contains("http")) {
        const json& h = j.at("http");
        cfg.http.host = h.value("host", cfg.http.host);
        cfg.http.port = h.value("port", cfg.http.port);
        cfg.http.path = h.value("path", cfg.http.path);
        cfg.http.use_tls = h.value("tls", cfg.http.use_tls);
        cfg.http.model = h.value("model", cfg.http.model);
        cfg.http.token_env = h.value("token_env", cfg.http.token_env);
    }
    return cfg;
}

pipeline_config load_pipeline_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("config parse error: ") + e.what());
    }
    return config_from_json(j);
}

void validate_config(const pipeline_config& cfg) {
    if (cfg.pool_path.empty()) throw validation_error("config: pool path is required");
    if (!fs::exists(cfg.pool_path)) {
        throw validation_error("config: pool file does not exist: " + cfg.pool_path.string());
    }
    if (cfg.out_dir.empty()) throw validation_error("config: out_dir is required");
    if (cfg.steps == 0) throw validation_error("config: fsp.steps must be >= 1");
    if (cfg.fsp_count == 0) throw validation_error("config: fsp.count must be >= 1");
    if (cfg.min_turns == 0) throw validation_error("config: fsp.min_turns must be >= 1");
    if (cfg.merge_p < 0 || cfg.merge_p > 1) throw validation_error("config: merge_p outside [0,1]");
    if (cfg.q_long < 0 || cfg.q_long > 1) throw validation_error("config: q_long outside [0,1]");
    if (cfg.keywords.empty()) throw validation_error("config: keyword list must be non-empty");
    for (const std::string* role : {&cfg.graph_judge, &cfg.nested_judge_kind,
                                    &cfg.translate_backend, &cfg.teacher, &cfg.student,
                                    &cfg.judge}) {
        if (*role != "mock" && *role != "llm") {
            throw validation_error("config: backend roles must be 'mock' or 'llm'");
        }
        if (*role == "llm" && cfg.http.host.empty()) {
            throw validation_error("config: llm role requires http.host");
        }
    }
}

json run_report_to_json(const run_report& r) {
    json stages = json::array();
    for (const auto& s : r.stages) {
        stages.push_back({{"name", s.name},
                          {"ran", s.ran},
                          {"wall_ms", s.wall_ms},
                          {"counts", s.counts},
                          {"drops", s.drops}});
    }
    return json{{"seed", r.seed}, {"stages", std::move(stages)}};
}

run_report run_pipeline(const pipeline_config& cfg) {
    validate_config(cfg);
    fs::create_directories(cfg.out_dir);

    const fs::path graphs_path = cfg.out_dir / "graphs.json";
    const fs::path fsps_path = cfg.out_dir / "fsps.jsonl";
    const fs::path enhanced_path = cfg.out_dir / "enhanced.jsonl";
    const fs::path enhanced_split_path = cfg.out_dir / "enhanced.split.jsonl";
    const fs::path instances_path = cfg.out_dir / "instances.jsonl";
    const fs::path trajectories_path = cfg.out_dir / "trajectories.jsonl";
    const fs::path pairs_path = cfg.out_dir / "pairs.jsonl";
    const fs::path postprocessed_path = cfg.out_dir / "postprocessed.jsonl";
    const fs::path final_path = cfg.out_dir / "final_dataset.jsonl";
    const fs::path manifest_path = cfg.out_dir / "mix_manifest.json";
    const fs::path stats_path = cfg.out_dir / "stats.json";

    checkpoint_store store = checkpoint_store::load(cfg.out_dir / "checkpoints.json");
    run_report report;
    report.seed = cfg.seed;
    bool upstream_ran = false;

    auto run_stage = [&](const std::string& name, const std::string& material,
                         const std::vector<fs::path>& inputs,
                         const std::vector<fs::path>& outputs, auto&& body) {
        std::string hash_material = material + "|seed=" + std::to_string(cfg.seed);
        for (const auto& in : inputs) hash_material += "|" + file_hash(in);
        std::string config_hash = hex64(fnv1a64(hash_material));
        stage_report sr;
        sr.name = name;
        if (!upstream_ran && store.valid(name, config_hash, outputs)) {
            report.stages.push_back(std::move(sr));
            return;
        }
        auto t0 = std::chrono::steady_clock::now();
        body(sr);
        sr.ran = true;
        upstream_ran = true;
        sr.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
        store.record(name, config_hash, outputs);
        report.stages.push_back(std::move(sr));
    };

    // ---- graph ----
    run_stage(
        "graph",
        "k=" + std::to_string(cfg.k_cand) + "|cross=" + std::to_string(cfg.cross_category) +
            "|judge=" + cfg.graph_judge + "|density=" + std::to_string(cfg.edge_density),
        {cfg.pool_path}, {graphs_path}, [&](stage_report& sr) {
            function_pool pool = load_pool(cfg.pool_path);
            graph_config gc{cfg.k_cand, cfg.cross_category, cfg.jobs};
            graph_set graphs;
            if (cfg.graph_judge == "llm") {
                auto http = make_http_backend(cfg);
                llm_dependency_judge judge(*http);
                graphs = build_graph_set(pool, judge, gc, derive_seed(cfg.seed, "graph"));
            } else {
                hash_dependency_judge judge(derive_seed(cfg.seed, "depjudge"), cfg.edge_density);
                graphs = build_graph_set(pool, judge, gc, derive_seed(cfg.seed, "graph"));
            }
            save_graph_set(graphs, graphs_path);
            sr.counts["graphs"] = graphs.size();
            size_t edges = 0;
            for (const auto& [_, g] : graphs.graphs()) edges += g.edges.size();
            sr.counts["edges"] = edges;
        });

    // ---- fsp ----
    run_stage("fsp",
              "steps=" + std::to_string(cfg.steps) + "|count=" + std::to_string(cfg.fsp_count) +
                  "|min=" + std::to_string(cfg.min_turns),
              {graphs_path}, {fsps_path}, [&](stage_report& sr) {
                  graph_set graphs = load_graph_set(graphs_path);
                  sampler_config sc{cfg.steps, cfg.fsp_count, cfg.min_turns};
                  std::vector<fsp> paths = sample_fsps(graphs, sc, derive_seed(cfg.seed, "fsp"));
                  save_fsps(paths, fsps_path);
                  sr.counts["fsps"] = paths.size();
              });

    // ---- node_ops ----
    run_stage("node_ops",
              "p=" + std::to_string(cfg.merge_p) + "|q=" + std::to_string(cfg.q_long) +
                  "|judge=" + cfg.nested_judge_kind +
                  "|density=" + std::to_string(cfg.nested_density),
              {cfg.pool_path, graphs_path, fsps_path}, {enhanced_path, enhanced_split_path},
              [&](stage_report& sr) {
                  function_pool pool = load_pool(cfg.pool_path);
                  graph_set graphs = load_graph_set(graphs_path);
                  std::vector<fsp> paths = load_fsps(fsps_path);
                  std::unique_ptr<chat_backend> http;
                  std::unique_ptr<nested_judge> judge;
                  if (cfg.nested_judge_kind == "llm") {
                      http = make_http_backend(cfg);
                      judge = std::make_unique<llm_nested_judge>(*http);
                  } else {
                      judge = std::make_unique<hash_nested_judge>(
                          derive_seed(cfg.seed, "nestjudge"), cfg.nested_density);
                  }
                  node_ops_config noc{cfg.merge_p, cfg.q_long, std::nullopt};
                  auto enhanced = parallel_map(paths, cfg.jobs, [&](const fsp& p, size_t i) {
                      rng64 rng(derive_seed(cfg.seed, "ops", i));
                      return enhance(p, graphs, pool, *judge, noc, rng);
                  });
                  std::vector<fsp> phis, phihats;
                  for (auto& [phi, phihat] : enhanced) {
                      phis.push_back(std::move(phi));
                      phihats.push_back(std::move(phihat));
                  }
                  save_fsps(phis, enhanced_path);
                  save_fsps(phihats, enhanced_split_path);
                  sr.counts["enhanced"] = phis.size();
                  sr.counts["enhanced_with_miss"] = phihats.size();
              });

    // ---- translate ----
    run_stage(
        "translate",
        "backend=" + cfg.translate_backend + "|err=" + std::to_string(cfg.error_rate) +
            "|singles=" + std::to_string(cfg.singles_count) +
            "|min=" + std::to_string(cfg.min_turns),
        {cfg.pool_path, graphs_path, enhanced_path, enhanced_split_path}, {instances_path},
        [&](stage_report& sr) {
            function_pool pool = load_pool(cfg.pool_path);
            std::vector<fsp> phis = load_fsps(enhanced_path);
            std::vector<fsp> phihats = load_fsps(enhanced_split_path);

            // Single-turn seeds: single, parallel, and multiple-call patterns.
            std::vector<fsp> singles;
            const auto ids = pool.ids();
            graph_set graphs = load_graph_set(graphs_path);
            for (size_t i = 0; i < cfg.singles_count; ++i) {
                const function_id& base = ids[i % ids.size()];
                turn_group turn;
                turn.functions = {base};
                switch (i % 3) {
                    case 1: turn.functions.push_back(base); break;  // parallel
                    case 2: {
                        if (const auto* g = graphs.find(base); g && !g->edges.empty()) {
                            turn.functions.push_back(g->edges.front());  // multiple
                        }
                        break;
                    }
                    default: break;
                }
                fsp single;
                single.turns.push_back(std::move(turn));
                single.provenance.seed = derive_seed(cfg.seed, "single", i);
                single.provenance.start = base;
                singles.push_back(std::move(single));
            }

            struct task {
                const fsp* path;
                std::string id_prefix;
                size_t min_turns;
            };
            std::vector<task> tasks;
            for (size_t i = 0; i < phis.size(); ++i) {
                tasks.push_back({&phis[i], "phi-" + std::to_string(i), cfg.min_turns});
            }
            for (size_t i = 0; i < phihats.size(); ++i) {
                tasks.push_back({&phihats[i], "phihat-" + std::to_string(i), cfg.min_turns});
            }
            for (size_t i = 0; i < singles.size(); ++i) {
                tasks.push_back({&singles[i], "single-" + std::to_string(i), 1});
            }

            simulated_executor_config xc;
            xc.seed = derive_seed(cfg.seed, "exec");
            xc.error_rate = cfg.error_rate;
            xc.error_keywords = cfg.keywords;
            std::unique_ptr<chat_backend> http;
            if (cfg.translate_backend == "llm") http = make_http_backend(cfg);

            auto results = parallel_map(tasks, cfg.jobs, [&](const task& t, size_t) {
                simulated_executor exec(xc);
                translate_config tc;
                tc.min_turns = t.min_turns;
                translate_result r;
                if (http) {
                    llm_translation_backend backend(*http);
                    r = translate_fsp(*t.path, pool, backend, exec, tc);
                } else {
                    mock_translation_backend backend;
                    r = translate_fsp(*t.path, pool, backend, exec, tc);
                }
                if (r.instance) r.instance->id = t.id_prefix + "-" + r.instance->id;
                return r;
            });

            std::vector<translation_instance> kept;
            for (auto& r : results) {
                if (r.instance) {
                    kept.push_back(std::move(*r.instance));
                } else {
                    sr.drops[r.drop_reason] += 1;
                }
            }
            save_instances(kept, instances_path);
            sr.counts["instances"] = kept.size();
        });

    // ---- distill ----
    run_stage(
        "distill",
        "teacher=" + cfg.teacher + "|student=" + cfg.student + "|judge=" + cfg.judge +
            "|neg=" + std::to_string(cfg.negatives) + "|rollouts=" + std::to_string(cfg.rollouts) +
            "|wrong=" + std::to_string(cfg.student_wrong_rate) +
            "|substep=" + std::to_string(cfg.substep_split),
        {cfg.pool_path, instances_path}, {trajectories_path, pairs_path},
        [&](stage_report& sr) {
            function_pool pool = load_pool(cfg.pool_path);
            std::vector<translation_instance> instances = load_instances(instances_path);
            distill_config dc;
            dc.substep_split = cfg.substep_split;
            dc.rollouts = cfg.negatives ? cfg.rollouts : 0;

            simulated_executor_config xc;
            xc.seed = derive_seed(cfg.seed, "exec");
            xc.error_rate = cfg.error_rate;
            xc.error_keywords = cfg.keywords;

            std::unique_ptr<chat_backend> http_teacher, http_student, http_judge;
            if (cfg.teacher == "llm") http_teacher = make_http_backend(cfg);
            if (cfg.student == "llm") http_student = make_http_backend(cfg);
            if (cfg.judge == "llm") http_judge = make_http_backend(cfg);

            auto outcomes =
                parallel_map(instances, cfg.jobs, [&](const translation_instance& inst, size_t) {
                    simulated_executor exec(xc);
                    hint_following_backend mock_teacher(cfg.substep_split);
                    comparing_judge_backend mock_judge;
                    scripted_student_backend mock_student(
                        inst, derive_seed(cfg.seed, "student"), cfg.student_wrong_rate);
                    chat_backend& teacher =
                        http_teacher ? *http_teacher : static_cast<chat_backend&>(mock_teacher);
                    chat_backend* student =
                        cfg.negatives
                            ? (http_student ? http_student.get()
                                            : static_cast<chat_backend*>(&mock_student))
                            : nullptr;
                    chat_backend* judge =
                        cfg.negatives ? (http_judge ? http_judge.get()
                                                    : static_cast<chat_backend*>(&mock_judge))
                                      : nullptr;
                    return distill_instance(inst, pool, teacher, student, judge, exec, dc);
                });

            std::vector<trajectory> positives;
            std::vector<trajectory_pair> pairs;
            for (auto& o : outcomes) {
                if (!o.positive) {
                    sr.drops[o.drop_reason] += 1;
                    continue;
                }
                positives.push_back(std::move(*o.positive));
                if (o.pair) pairs.push_back(std::move(*o.pair));
            }
            save_trajectories(positives, trajectories_path);
            save_pairs(pairs, pairs_path);
            sr.counts["positives"] = positives.size();
            sr.counts["pairs"] = pairs.size();
        });

    // ---- postprocess ----
    run_stage("postprocess",
              "shuffle=" + std::to_string(cfg.shuffle) +
                  "|irr=" + std::to_string(cfg.irrelevance_count) +
                  "|keywords=" + std::to_string(fnv1a64([&] {
                      std::string all;
                      for (const auto& k : cfg.keywords) all += k + "\x1f";
                      return all;
                  }())),
              {cfg.pool_path, trajectories_path}, {postprocessed_path}, [&](stage_report& sr) {
                  function_pool pool = load_pool(cfg.pool_path);
                  std::vector<trajectory> trajectories = load_trajectories(trajectories_path);
                  std::vector<trajectory> kept;
                  for (size_t i = 0; i < trajectories.size(); ++i) {
                      filter_decision decision = keyword_filter(trajectories[i], cfg.keywords);
                      if (!decision.keep) {
                          sr.drops["keyword: " + decision.keyword] += 1;
                          continue;
                      }
                      if (cfg.shuffle) {
                          rng64 rng(derive_seed(cfg.seed, "shuffle", i));
                          kept.push_back(shuffle_functions(trajectories[i], rng));
                      } else {
                          kept.push_back(trajectories[i]);
                      }
                  }
                  std::vector<trajectory> irrelevance = build_irrelevance(
                      pool, cfg.irrelevance_count, derive_seed(cfg.seed, "irr"));
                  sr.counts["kept"] = kept.size();
                  sr.counts["irrelevance"] = irrelevance.size();
                  kept.insert(kept.end(), irrelevance.begin(), irrelevance.end());
                  save_trajectories(kept, postprocessed_path);
              });

    // ---- mix ----
    run_stage("mix",
              "single=" + std::to_string(cfg.mix_single) +
                  "|multi=" + std::to_string(cfg.mix_multi) +
                  "|irr=" + std::to_string(cfg.mix_irrelevance),
              {postprocessed_path}, {final_path, manifest_path}, [&](stage_report& sr) {
                  std::vector<trajectory> all = load_trajectories(postprocessed_path);
                  std::map<std::string, std::vector<trajectory>> by_type;
                  for (auto& t : all) by_type[t.type].push_back(std::move(t));
                  auto resolved = [&](size_t wanted, const std::string& type) {
                      if (wanted > 0) return wanted;
                      auto it = by_type.find(type);
                      return it == by_type.end() ? size_t{0} : it->second.size();
                  };
                  mixture_config mc;
                  mc.n_single_turn = resolved(cfg.mix_single, "single_turn");
                  mc.n_multi_turn = resolved(cfg.mix_multi, "multi_turn");
                  mc.n_irrelevance = resolved(cfg.mix_irrelevance, "irrelevance");
                  mc.seed = derive_seed(cfg.seed, "mix");
                  mixture_result result = mix(by_type, mc);
                  save_trajectories(result.dataset, final_path);
                  std::ofstream mf(manifest_path);
                  mf << manifest_to_json(result.manifest).dump(2) << "\n";
                  sr.counts["final"] = result.dataset.size();
                  sr.counts["single_turn"] = mc.n_single_turn;
                  sr.counts["multi_turn"] = mc.n_multi_turn;
                  sr.counts["irrelevance"] = mc.n_irrelevance;
              });

    // ---- stats ----
    run_stage("stats", "v1", {final_path, pairs_path}, {stats_path}, [&](stage_report& sr) {
        std::vector<trajectory> final_set = load_trajectories(final_path);
        std::vector<trajectory_pair> pairs = load_pairs(pairs_path);
        dataset_stats stats = compute_stats(final_set, pairs);
        std::ofstream f(stats_path);
        f << stats_to_json(stats).dump(2) << "\n";
        sr.counts["total"] = stats.total;
    });

    std::ofstream rf(cfg.out_dir / "report.json");
    rf << run_report_to_json(report).dump(2) << "\n";
    return report;
}

}  // namespace fctraj
