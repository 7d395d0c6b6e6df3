// Command-line driver: synthetic data, the pipeline stages, the HTTP
// service and the evaluation harness.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crosstraj/error.hpp"
#include "crosstraj/gnn.hpp"
#include "crosstraj/pipeline.hpp"
#include "crosstraj/service.hpp"
#include "crosstraj/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crosstraj;

namespace {

enum class Format { Json, Text };

struct Common {
  Format format = Format::Text;
};

void emit(const Common& c, const json& doc, const std::string& text) {
  if (c.format == Format::Json) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << text;
  }
  std::cout.flush();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path + ": " + e.what());
  }
}

std::optional<std::string> env_data_dir() {
  if (const char* v = std::getenv("CROSSTRAJ_DATA_DIR"); v && *v) return std::string(v);
  return std::nullopt;
}

fs::path project_or_default(const std::string& given) {
  if (!given.empty()) return given;
  if (auto d = env_data_dir()) return *d;
  fail(ErrorKind::Precondition, "--project is required (or set CROSSTRAJ_DATA_DIR)");
}

std::string threshold_table(const json& report) {
  std::string out = "  threshold  precision  predicted+\n";
  for (const auto& row : report.at("validation_precision")) {
    out += fmt("  %9.2f", row.at("threshold").get<double>());
    out += row.at("precision").is_null() ? std::string("  undefined")
                                         : fmt("  %9.4f", row.at("precision").get<double>());
    out += "  " + std::to_string(row.at("predicted_positive").get<std::size_t>()) + "\n";
  }
  return out;
}

struct ModelFlags {
  std::string model_config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::string ablation = "full";

  void add(CLI::App* cmd) {
    cmd->add_option("--model-config", model_config, "JSON file with model hyper-parameters");
    cmd->add_option("--seed", seed, "Training seed");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--ablation", ablation, "Model variant")
        ->check(CLI::IsMember({"full", "no_gat", "no_fusion"}));
  }

  gnn::ModelConfig config() const {
    gnn::ModelConfig c;
    if (!model_config.empty()) c = gnn::config_from_json(load_json_file(model_config));
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (ablation != "full") c = gnn::make_ablation(c, gnn::parse_ablation(ablation));
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crosstraj: cross-sample developmental trajectory inference"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values (sections per subcommand)");
  Common common;
  app.add_option("--format", common.format, "Output format")
      ->transform(CLI::CheckedTransformer(std::map<std::string, Format>{{"json", Format::Json}, {"text", Format::Text}}))
      ->default_str("text");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset with planted lineages");
  std::string synth_out, synth_manifest;
  std::optional<std::uint64_t> synth_seed;
  synth_cmd->add_option("--out", synth_out, "Output dataset directory")->required();
  synth_cmd->add_option("--manifest", synth_manifest, "JSON manifest overriding the defaults");
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Load a dataset and build population nodes");
  std::string ingest_dataset, ingest_project, ingest_embeddings;
  pipeline::IngestOptions ingest_opts;
  ingest_cmd->add_option("--dataset", ingest_dataset, "Dataset root")->required();
  ingest_cmd->add_option("--project", ingest_project, "Project directory (default: $CROSSTRAJ_DATA_DIR)");
  ingest_cmd->add_option("--embeddings", ingest_embeddings, "Gene embedding table");
  ingest_cmd->add_option("--min-cells", ingest_opts.min_cells, "Minimum cells per population");
  ingest_cmd->add_option("--deg-count", ingest_opts.deg_count, "DEGs kept per population");
  ingest_cmd->add_option("--embedding-seed", ingest_opts.embedding_seed, "Fallback embedder seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the link predictor");
  std::string train_project, train_labels;
  ModelFlags train_flags;
  train_cmd->add_option("--project", train_project, "Project directory (default: $CROSSTRAJ_DATA_DIR)");
  train_cmd->add_option("--labels", train_labels, "Training edge list (default: <dataset>/truth_edges.tsv)");
  train_flags.add(train_cmd);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Score, filter and merge edges");
  std::string predict_project;
  std::optional<double> predict_threshold;
  predict_cmd->add_option("--project", predict_project, "Project directory (default: $CROSSTRAJ_DATA_DIR)");
  predict_cmd->add_option("--threshold", predict_threshold, "Probability threshold (default: chosen in training)")
      ->check(CLI::Range(0.0, 1.0));

  // paths
  auto* paths_cmd = app.add_subcommand("paths", "Enumerate trajectories and group them into paths");
  std::string paths_project;
  pipeline::PathsOptions paths_opts;
  std::optional<std::size_t> paths_max_len;
  paths_cmd->add_option("--project", paths_project, "Project directory (default: $CROSSTRAJ_DATA_DIR)");
  paths_cmd->add_option("--max-len", paths_max_len, "Longest path (default: number of stages)");
  paths_cmd->add_option("--fraction", paths_opts.fraction, "Top-frequency fraction")->check(CLI::Range(0.0, 1.0));

  // summarize
  auto* summarize_cmd = app.add_subcommand("summarize", "Contours, directions and similarity per node");
  std::string summarize_project;
  summarize_cmd->add_option("--project", summarize_project, "Project directory (default: $CROSSTRAJ_DATA_DIR)");

  // enrich
  auto* enrich_cmd = app.add_subcommand("enrich", "GO over-representation for one trajectory");
  std::string enrich_project, enrich_obo, enrich_gaf;
  pipeline::EnrichOptions enrich_opts;
  enrich_cmd->add_option("--project", enrich_project, "Project directory (default: $CROSSTRAJ_DATA_DIR)");
  enrich_cmd->add_option("--trajectory", enrich_opts.trajectory_id, "Trajectory id <path>#<index>")->required();
  enrich_cmd->add_option("--obo", enrich_obo, "Ontology file (default: <dataset>/go/go.obo)");
  enrich_cmd->add_option("--gaf", enrich_gaf, "Annotation file (default: <dataset>/go/annotations.gaf)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  std::string serve_root, serve_static;
  service::ServeOptions serve_opts;
  std::size_t serve_workers = 2;
  serve_cmd->add_option("--root", serve_root, "Service data directory (default: $CROSSTRAJ_DATA_DIR)");
  serve_cmd->add_option("--host", serve_opts.host, "Bind address");
  serve_cmd->add_option("--port", serve_opts.port, "Port (0 = ephemeral)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--static", serve_static, "Directory with the UI bundle");
  serve_cmd->add_option("--workers", serve_workers, "Background job workers")->check(CLI::PositiveNumber);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Train over several seeds and report ACC");
  std::string eval_dataset, eval_labels, eval_embeddings;
  std::vector<std::uint64_t> eval_seeds = {0, 1, 2, 3, 4};
  ModelFlags eval_flags;
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset root")->required();
  eval_cmd->add_option("--labels", eval_labels, "Edge list (default: <dataset>/truth_edges.tsv)");
  eval_cmd->add_option("--embeddings", eval_embeddings, "Gene embedding table");
  eval_cmd->add_option("--seeds", eval_seeds, "Seeds")->delimiter(',');
  eval_flags.add(eval_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_cmd) {
      synth::SynthManifest m;
      if (!synth_manifest.empty()) m = synth::manifest_from_json(load_json_file(synth_manifest));
      if (synth_seed) m.seed = *synth_seed;
      const auto r = synth::write_dataset(m, synth_out);
      json pops = json::array();
      for (const auto& p : r.populations)
        pops.push_back({{"sample", p.sample_id}, {"stage", p.stage}, {"cell_type", p.cell_type}, {"cells", p.cells}});
      const json doc = {{"out", fs::absolute(synth_out).string()},
                        {"manifest", synth::to_json(m)},
                        {"populations", pops},
                        {"truth_edges", r.truth_edges.size()}};
      emit(common, doc,
           "wrote " + doc["out"].get<std::string>() + ": " + std::to_string(r.populations.size()) +
               " populations, " + std::to_string(r.truth_edges.size()) + " planted edges\n");
    } else if (*ingest_cmd) {
      ingest_opts.dataset = fs::absolute(ingest_dataset);
      if (!ingest_embeddings.empty()) ingest_opts.embeddings = fs::absolute(ingest_embeddings);
      const json r = pipeline::run_ingest(ingest_opts, project_or_default(ingest_project));
      std::string text = "ingested " + std::to_string(r.at("cells_loaded").get<std::size_t>()) + " cells into " +
                         std::to_string(r.at("nodes").get<std::size_t>()) + " population nodes\n";
      for (const auto& w : r.at("warnings")) text += "warning: " + w.get<std::string>() + "\n";
      emit(common, r, text);
    } else if (*train_cmd) {
      pipeline::TrainOptions opts;
      opts.config = train_flags.config();
      if (!train_labels.empty()) opts.labels = train_labels;
      const bool text = common.format == Format::Text;
      const auto report = pipeline::run_train(project_or_default(train_project), opts,
                                              [&](std::size_t epoch, std::size_t epochs, double loss) {
                                                if (text && (epoch % 10 == 0 || epoch == epochs))
                                                  std::cerr << "epoch " << epoch << "/" << epochs
                                                            << " loss " << fmt("%.5f", loss) << "\n";
                                              });
      json doc = gnn::to_json(report);
      doc["wall_seconds"] = report.wall_seconds;
      emit(common, doc,
           "test ACC " + fmt("%.4f", report.test_acc) + ", threshold " +
               fmt("%.2f", doc.at("chosen_threshold").get<double>()) + "\n" + threshold_table(doc));
    } else if (*predict_cmd) {
      pipeline::PredictOptions opts;
      opts.threshold = predict_threshold;
      const json r = pipeline::run_predict(project_or_default(predict_project), opts);
      emit(common, r,
           "kept " + std::to_string(r.at("kept").get<std::size_t>()) + " of " +
               std::to_string(r.at("predicted").get<std::size_t>()) + " predicted edges, " +
               std::to_string(r.at("merged_edges").get<std::size_t>()) + " merged, density " +
               fmt("%.4f", r.at("density").get<double>()) + "\n");
    } else if (*paths_cmd) {
      paths_opts.max_len = paths_max_len;
      const json r = pipeline::run_paths(project_or_default(paths_project), paths_opts);
      std::string text = std::to_string(r.at("total").get<std::size_t>()) + " paths, top " +
                         std::to_string(r.at("top").size()) + ":\n";
      for (const auto& id : r.at("top")) text += "  " + id.get<std::string>() + "\n";
      emit(common, r, text);
    } else if (*summarize_cmd) {
      const json r = pipeline::run_summarize(project_or_default(summarize_project));
      emit(common, r,
           "summarized " + std::to_string(r.at("nodes").get<std::size_t>()) + " nodes, " +
               std::to_string(r.at("edges").get<std::size_t>()) + " edges\n");
    } else if (*enrich_cmd) {
      if (!enrich_obo.empty()) enrich_opts.obo = enrich_obo;
      if (!enrich_gaf.empty()) enrich_opts.gaf = enrich_gaf;
      const json r = pipeline::run_enrich(project_or_default(enrich_project), enrich_opts);
      std::string text;
      for (const auto& row : r.at("rows"))
        text += row.at("term_id").get<std::string>() + "\t" + fmt("%.3g", row.at("p").get<double>()) + "\t" +
                fmt("%.3g", row.at("fdr").get<double>()) + (row.at("significant").get<bool>() ? "\t*" : "\t") +
                "\t" + row.at("name").get<std::string>() + "\n";
      emit(common, r, text);
    } else if (*serve_cmd) {
      fs::path root = serve_root;
      if (root.empty()) root = env_data_dir().value_or("crosstraj-data");
      if (!serve_static.empty()) serve_opts.static_dir = serve_static;
      service::Service svc(root, serve_workers);
      service::serve(svc, serve_opts, [&](int port) {
        if (common.format == Format::Json) {
          std::cout << json{{"host", serve_opts.host}, {"port", port}, {"root", svc.root().string()}}.dump() << "\n";
        } else {
          std::cout << "listening on http://" << serve_opts.host << ":" << port << "\n";
        }
        std::cout.flush();
      });
    } else if (*eval_cmd) {
      pipeline::EvalOptions opts;
      opts.ingest.dataset = fs::absolute(eval_dataset);
      if (!eval_embeddings.empty()) opts.ingest.embeddings = eval_embeddings;
      if (!eval_labels.empty()) opts.labels = eval_labels;
      opts.seeds = eval_seeds;
      opts.config = eval_flags.config();
      const bool text = common.format == Format::Text;
      const auto r = pipeline::evaluate(opts, [&](std::uint64_t seed, const gnn::TrainReport& rep) {
        if (text) std::cerr << "seed " << seed << ": ACC " << fmt("%.4f", rep.test_acc) << "\n";
      });
      const json doc = pipeline::to_json(r);
      std::string out = "variant " + eval_flags.ablation + "\n";
      for (const auto& run : doc.at("runs")) {
        out += "seed " + std::to_string(run.at("seed").get<std::uint64_t>()) + "  ACC " +
               fmt("%.4f", run.at("test_acc").get<double>()) + "  threshold " +
               fmt("%.2f", run.at("chosen_threshold").get<double>()) + "\n" + threshold_table(run);
      }
      out += "mean ACC " + fmt("%.4f", r.mean_acc) + "  min ACC " + fmt("%.4f", r.min_acc) + "\n";
      emit(common, doc, out);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
