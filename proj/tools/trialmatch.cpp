// Command-line front end for the matching pipeline.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "trialmatch/benchmark.hpp"
#include "trialmatch/pipeline.hpp"
#include "trialmatch/text.hpp"

using namespace trialmatch;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Config file (TOML-style key = value)")->required();
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set rerank.method=cg");
}

PipelineConfig load(const Common& c) { return load_config(c.config, c.overrides); }

void emit(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
}

void print_ingest(const IngestSummary& s) {
  std::cerr << "ingested " << s.read << " records: " << s.stored << " new, " << s.existing
            << " already stored, " << s.failed << " failed\n";
  for (const auto& e : s.errors) std::cerr << "  " << e << "\n";
}

void print_macro(const MetricReport& m) {
  for (const auto& [k, v] : m.macro) std::cout << k << "\t" << text::format_double(v) << "\n";
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage patient to clinical-trial matching"};
  app.require_subcommand(1);

  Common ingest_opts;
  auto* ingest = app.add_subcommand("ingest", "Extract, normalize and store the trial corpus");
  add_common(ingest, ingest_opts);

  Common extract_opts;
  std::string extract_out;
  auto* extract = app.add_subcommand("extract-topics", "Build and store patient profiles");
  add_common(extract, extract_opts);
  extract->add_option("-o,--out", extract_out, "Write profiles as JSONL here (default stdout)");

  Common retrieve_opts;
  std::string retrieve_out;
  auto* retrieve = app.add_subcommand("retrieve", "First stage only; writes a run file");
  add_common(retrieve, retrieve_opts);
  retrieve->add_option("-o,--out", retrieve_out, "Run file path (default stdout)");

  Common rerank_opts;
  std::string rerank_out;
  auto* rerank_cmd = app.add_subcommand("rerank", "Retrieve, label and re-rank; writes a run file");
  add_common(rerank_cmd, rerank_opts);
  rerank_cmd->add_option("-o,--out", rerank_out, "Run file path (default stdout)");

  std::string eval_run, eval_qrels, eval_gain = "linear", eval_json;
  int eval_threshold = 2;
  auto* evaluate = app.add_subcommand("evaluate", "Score a run file against qrels");
  evaluate->add_option("--run", eval_run, "Run file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--qrels", eval_qrels, "Qrels file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--gain", eval_gain, "NDCG gain")->check(CLI::IsMember({"linear", "exponential"}));
  evaluate->add_option("--threshold", eval_threshold, "Minimum relevant grade")->check(CLI::Range(1, 2));
  evaluate->add_option("--json", eval_json, "Also write the full report as JSON here");

  Common all_opts;
  auto* run_all = app.add_subcommand("run-all", "Full pipeline with evaluation and run directory");
  add_common(run_all, all_opts);

  Common sweep_opts;
  std::vector<int> levels{1, 2, 3, 4};
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep-n", "First-stage quality across relevance levels");
  add_common(sweep, sweep_opts);
  sweep->add_option("--levels", levels, "Levels to evaluate")->delimiter(',');
  sweep->add_option("-o,--out", sweep_out, "TSV path (default stdout)");

  Common depth_opts;
  std::string depth_out;
  auto* depth = app.add_subcommand("depth-analysis", "Correlate retrieval quality with diagnosis depth");
  add_common(depth, depth_opts);
  depth->add_option("-o,--out", depth_out, "TSV path (default stdout)");

  std::string gen_out;
  BenchmarkParams gen_params;
  auto* gen = app.add_subcommand("gen-benchmark", "Write the synthetic benchmark");
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->add_option("--topics", gen_params.topics, "Number of topics")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_params.seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      PipelineContext ctx(load(ingest_opts));
      print_ingest(ctx.ingest_summary());
      std::cout << ctx.corpus().size() << " trials in " << ctx.store().dir().string() << "\n";
    } else if (*extract) {
      PipelineContext ctx(load(extract_opts));
      std::ostringstream out;
      ExtractionProvenance prov{ctx.labeler().id(), templates::patient_extraction().hash};
      for (const auto& t : ctx.topics()) {
        PatientProfile p = ctx.patient(t);
        ctx.store().put_patient(ctx.patient_key(t), p, prov);
        out << patient_to_json(p) << "\n";
      }
      emit(extract_out, out.str());
    } else if (*retrieve) {
      PipelineContext ctx(load(retrieve_opts));
      RunFile run;
      for (const auto& t : ctx.topics()) {
        TopicResult r = ctx.retrieve(t, ctx.patient(t));
        run.set_topic(t.id, r.candidates, ctx.config().run_tag);
      }
      std::ostringstream out;
      write_run(out, run);
      emit(retrieve_out, out.str());
    } else if (*rerank_cmd) {
      PipelineConfig cfg = load(rerank_opts);
      PipelineResult res = run_pipeline(cfg, {nullptr, false});
      std::ostringstream out;
      write_run(out, res.run);
      emit(rerank_out, out.str());
      std::cerr << "labeler calls: " << res.upstream_calls << "\n";
    } else if (*evaluate) {
      EvalConfig ec;
      ec.threshold = eval_threshold;
      ec.gain = eval_gain == "exponential" ? Gain::kExponential : Gain::kLinear;
      MetricReport m = evaluate_run(read_run(std::filesystem::path(eval_run)),
                                    read_qrels(std::filesystem::path(eval_qrels)), ec);
      print_macro(m);
      if (!eval_json.empty()) {
        std::ostringstream out;
        write_metrics_json(out, m);
        emit(eval_json, out.str());
      }
    } else if (*run_all) {
      PipelineResult res = run_pipeline(load(all_opts));
      print_ingest(res.ingest);
      if (res.metrics) print_macro(*res.metrics);
      std::cerr << "labeler calls: " << res.upstream_calls << "\n";
      std::cout << "run directory: " << res.run_dir.string() << "\n";
    } else if (*sweep) {
      PipelineContext ctx(load(sweep_opts));
      std::ostringstream out;
      write_sweep_tsv(out, sweep_n_level(ctx, levels));
      emit(sweep_out, out.str());
    } else if (*depth) {
      PipelineContext ctx(load(depth_opts));
      if (!ctx.qrels()) throw std::runtime_error("depth-analysis needs qrels in the config");
      std::vector<TopicResult> results;
      for (const auto& t : ctx.topics()) results.push_back(ctx.retrieve(t, ctx.patient(t)));
      auto points = depth_points(results, *ctx.qrels(), ctx.ontology(), ctx.config().relevance_threshold);
      std::ostringstream out;
      write_depth_tsv(out, depth_analysis(points));
      emit(depth_out, out.str());
    } else if (*gen) {
      Benchmark b = generate_benchmark(gen_params);
      write_benchmark(b, gen_out);
      std::cout << b.trials.size() << " trials, " << b.topics.size() << " topics written to " << gen_out
                << "\n";
    }
  } catch (const PipelineError& e) {
    std::cerr << "error in stage " << e.stage() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
