#include "physgnn/cli.hpp"

#include <omp.h>

#include <filesystem>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "physgnn/config.hpp"
#include "physgnn/error.hpp"
#include "physgnn/kernels.hpp"
#include "physgnn/pipeline.hpp"
#include "physgnn/train.hpp"
#include "physgnn/vtk.hpp"

namespace physgnn::cli {

namespace {

namespace fs = std::filesystem;
using pipeline::join_path;
using pipeline::write_file;

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t x = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kInitStream = 1;

struct Common {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

config::RunConfig resolve_config(const Common& c) {
  auto cfg = c.config_path.empty() ? config::RunConfig{} : config::load_run_config(c.config_path);
  if (c.seed_opt->count()) cfg.seed = c.seed;
  if (c.threads_opt->count()) cfg.threads = c.threads;
  if (c.out_opt->count()) cfg.out = c.out;
  cfg.dataset.spec.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  if (cfg.threads > 0) {
    kernels::set_thread_count(cfg.threads);
    omp_set_num_threads(cfg.threads);
  }
  return cfg;
}

void prepare_out(const config::RunConfig& cfg) {
  fs::create_directories(cfg.out);
  write_file(join_path(cfg.out, "config.resolved.json"), config::to_json(cfg));
}

datagen::Split parse_split(const std::string& s) {
  if (s == "train") return datagen::Split::train;
  if (s == "validation" || s == "val") return datagen::Split::validation;
  if (s == "test") return datagen::Split::test;
  throw InputError("unknown split '" + s + "' (expected train, validation or test)");
}

std::string fixed6(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(6) << v;
  return o.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PhysGNN: graph neural network surrogate for tissue deformation"};
  app.name("physgnn");
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config_path, "Run configuration (JSON)");
  common.out_opt = app.add_option("--out", common.out, "Output directory");
  common.seed_opt = app.add_option("--seed", common.seed, "Root random seed");
  common.threads_opt = app.add_option("--threads", common.threads, "OpenMP thread count")->check(CLI::PositiveNumber);

  auto* mesh_cmd = app.add_subcommand("mesh", "Generate or import a tetrahedral mesh");
  mesh_cmd->require_subcommand(1);
  auto* gen = mesh_cmd->add_subcommand("gen", "Generate a structured box mesh");
  int nx = 0, ny = 0, nz = 0;
  double spacing = 0;
  std::vector<double> tumour_box;
  auto* nx_opt = gen->add_option("--nx", nx, "Nodes along x")->check(CLI::Range(2, 1000));
  auto* ny_opt = gen->add_option("--ny", ny, "Nodes along y")->check(CLI::Range(2, 1000));
  auto* nz_opt = gen->add_option("--nz", nz, "Nodes along z")->check(CLI::Range(2, 1000));
  auto* sp_opt = gen->add_option("--spacing", spacing, "Node pitch in mm")->check(CLI::PositiveNumber);
  auto* tb_opt = gen->add_option("--tumour-box", tumour_box, "Tumour box x0 y0 z0 x1 y1 z1 (mm)")->expected(6);
  auto* imp = mesh_cmd->add_subcommand("import", "Import a TetGen .node/.ele pair");
  std::string node_path, ele_path;
  imp->add_option("--node", node_path, "TetGen .node file")->required();
  imp->add_option("--ele", ele_path, "TetGen .ele file")->required();

  auto* sim = app.add_subcommand("simulate", "Run the FEM oracle over the dataset's load cases");
  std::string mesh_dir;
  bool dry_run = false;
  sim->add_option("--mesh", mesh_dir, "Mesh artifact directory (default: mesh section of the config)");
  sim->add_flag("--dry-run", dry_run, "Print the number of load cases only");

  std::string data_dir, checkpoint_path, split_name = "test";
  int max_epochs = 0;
  std::size_t sample = 0, repeats = 20;
  double threshold = 0;
  bool free_only = false, write_vtk = false;

  auto* tr = app.add_subcommand("train", "Train a model on a simulated dataset");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  auto* tr_epochs = tr->add_option("--max-epochs", max_epochs, "Override the epoch cap")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  ev->add_option("--split", split_name, "train, validation or test");
  auto* thr_opt = ev->add_option("--threshold", threshold, "Error threshold in mm")->check(CLI::PositiveNumber);
  auto* free_opt = ev->add_flag("--free-only", free_only, "Exclude fixed nodes from the metrics");

  auto* pr = app.add_subcommand("predict", "Predict the displacement field of one sample");
  pr->add_option("--data", data_dir, "Dataset directory")->required();
  pr->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  pr->add_option("--sample", sample, "Sample index");
  pr->add_flag("--vtk", write_vtk, "Also write a VTK file");

  auto* be = app.add_subcommand("bench", "Measure per-sample inference latency");
  be->add_option("--data", data_dir, "Dataset directory")->required();
  be->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  be->add_option("--sample", sample, "Sample index");
  be->add_option("--repeats", repeats, "Timed repetitions (>= 10)");

  auto* ab = app.add_subcommand("ablate", "Run the aggregator and layer-kind sweeps");
  ab->add_option("--data", data_dir, "Dataset directory")->required();
  auto* ab_epochs = ab->add_option("--max-epochs", max_epochs, "Epoch cap per variant")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store{"physgnn"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    auto cfg = resolve_config(common);

    if (gen->parsed() || imp->parsed()) {
      if (gen->parsed()) {
        if (nx_opt->count()) cfg.mesh.nx = nx;
        if (ny_opt->count()) cfg.mesh.ny = ny;
        if (nz_opt->count()) cfg.mesh.nz = nz;
        if (sp_opt->count()) cfg.mesh.spacing = spacing;
        if (tb_opt->count())
          cfg.mesh.tumour_box = {{tumour_box[0], tumour_box[1], tumour_box[2]},
                                 {tumour_box[3], tumour_box[4], tumour_box[5]}};
        cfg.mesh.kind = config::MeshSource::Kind::generate;
      } else {
        cfg.mesh.kind = config::MeshSource::Kind::tetgen;
        cfg.mesh.node_path = node_path;
        cfg.mesh.ele_path = ele_path;
      }
      const auto m = pipeline::build_mesh(cfg.mesh);
      const auto summary = pipeline::summarize(m);
      prepare_out(cfg);
      pipeline::write_mesh_artifact(cfg.out, m);
      write_file(join_path(cfg.out, "mesh_summary.json"), summary.to_json());
      out << summary.to_text();
      return kExitOk;
    }

    if (sim->parsed()) {
      if (dry_run) {
        out << cfg.dataset.spec.case_count() << " cases\n";
        return kExitOk;
      }
      const auto m = mesh_dir.empty() ? pipeline::build_mesh(cfg.mesh) : pipeline::read_mesh_artifact(mesh_dir);
      const auto result = pipeline::simulate_dataset(m, cfg);
      prepare_out(cfg);
      pipeline::write_dataset_dir(cfg.out, m, result);
      const auto& mf = result.manifest;
      out << "wrote " << result.samples.size() << " samples (train " << mf.count(datagen::Split::train)
          << ", validation " << mf.count(datagen::Split::validation) << ", test " << mf.count(datagen::Split::test)
          << ") to " << cfg.out << "\n";
      return kExitOk;
    }

    if (tr->parsed()) {
      const auto data = pipeline::load_dataset_dir(data_dir);
      if (tr_epochs->count()) cfg.train.max_epochs = max_epochs;
      auto model = gnn::Model::init(cfg.model.resolve(), derive_seed(cfg.seed, kInitStream));
      auto opts = cfg.train;
      opts.on_epoch = [&](const train::EpochRecord& r) {
        out << "epoch " << r.epoch << "  train " << fixed6(r.train_loss) << "  val " << fixed6(r.val_loss)
            << "  lr " << r.lr << "\n";
      };
      prepare_out(cfg);
      const auto result = train::train_loop(model, data.samples, data.manifest, opts, data.manifest_hash);
      gnn::save_checkpoint(join_path(cfg.out, "model.ckpt"), result.checkpoint);
      write_file(join_path(cfg.out, "history.jsonl"), train::history_to_jsonl(result.history));
      nlohmann::ordered_json s;
      s["epochs"] = result.history.size();
      s["best_epoch"] = result.best_epoch;
      s["best_val_loss_mm"] = result.best_val_loss;
      s["early_stopped"] = result.early_stopped;
      s["parameter_count"] = model.parameter_count();
      s["manifest_hash"] = data.manifest_hash;
      write_file(join_path(cfg.out, "train_summary.json"), s.dump(2) + "\n");
      out << "best validation loss " << fixed6(result.best_val_loss) << " mm at epoch " << result.best_epoch << "\n";
      return kExitOk;
    }

    if (ev->parsed() || pr->parsed() || be->parsed()) {
      const auto data = pipeline::load_dataset_dir(data_dir);
      const auto ckpt = gnn::load_checkpoint(checkpoint_path);
      prepare_out(cfg);
      if (ev->parsed()) {
        const auto split = parse_split(split_name);
        auto mo = cfg.metrics;
        if (thr_opt->count()) mo.threshold = threshold;
        if (free_opt->count()) mo.free_only = free_only;
        const auto report = train::evaluate(ckpt.model, data.samples, data.manifest.indices(split), mo,
                                            ckpt.normalization, data.fixed);
        const std::string base = join_path(cfg.out, std::string("metrics_") + datagen::to_string(split));
        write_file(base + ".txt", report.to_table());
        write_file(base + ".json", report.to_json());
        out << report.to_table();
        return kExitOk;
      }
      if (sample >= data.samples.size())
        throw InputError("sample " + std::to_string(sample) + " out of range (dataset has " +
                         std::to_string(data.samples.size()) + ")");
      const auto& s = data.samples[sample];
      if (pr->parsed()) {
        const auto pred = train::predict(ckpt.model, data.samples, {sample}, ckpt.normalization).front();
        std::ostringstream csv;
        csv << "node,dx,dy,dz\n" << std::setprecision(17);
        std::vector<mesh::Vec3> field(s.node_count);
        for (std::size_t n = 0; n < s.node_count; ++n) {
          field[n] = {pred[3 * n], pred[3 * n + 1], pred[3 * n + 2]};
          csv << n << ',' << field[n][0] << ',' << field[n][1] << ',' << field[n][2] << '\n';
        }
        write_file(join_path(cfg.out, "prediction.csv"), csv.str());
        if (write_vtk) vtk::write_unstructured_grid(join_path(cfg.out, "prediction.vtk"), data.mesh, field);
        out << "wrote prediction for sample " << sample << " to " << cfg.out << "\n";
        return kExitOk;
      }
      const auto st = train::benchmark_inference(ckpt.model, s, repeats, 3, ckpt.normalization);
      nlohmann::ordered_json j;
      j["node_count"] = st.node_count;
      j["repeats"] = st.seconds.size();
      j["mean_s"] = st.mean;
      j["std_s"] = st.stddev;
      j["min_s"] = st.min;
      j["max_s"] = st.max;
      j["seconds"] = st.seconds;
      write_file(join_path(cfg.out, "latency.json"), j.dump(2) + "\n");
      out << "inference latency " << fixed6(st.mean) << " +- " << fixed6(st.stddev) << " s over " << repeats
          << " runs (" << st.node_count << " nodes)\n";
      return kExitOk;
    }

    if (ab->parsed()) {
      const auto data = pipeline::load_dataset_dir(data_dir);
      train::AblationOptions opts;
      opts.width = cfg.model.width;
      opts.train = cfg.train;
      if (ab_epochs->count()) opts.train.max_epochs = max_epochs;
      opts.metrics = cfg.metrics;
      opts.init_seed = derive_seed(cfg.seed, kInitStream);
      prepare_out(cfg);
      const auto entries = train::run_ablation(data.samples, data.manifest, opts);
      const auto table = train::ablation_table(entries);
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& e : entries)
        j.push_back({{"sweep", e.sweep},
                     {"layers", e.label},
                     {"epochs", e.epochs},
                     {"best_val_loss_mm", e.best_val_loss},
                     {"test", nlohmann::ordered_json::parse(e.test.to_json())}});
      write_file(join_path(cfg.out, "ablation.txt"), table);
      write_file(join_path(cfg.out, "ablation.json"), j.dump(2) + "\n");
      out << table;
      return kExitOk;
    }
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitInput;
}

}  // namespace physgnn::cli
