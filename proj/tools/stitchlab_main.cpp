// stitchlab command-line front end.
//
// Subcommands: zoo train|eval, sweep, stats, genimg, plot.
// Config precedence: CLI flags > environment variables > config file >
// defaults; the resolved config is dumped into the output directory.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "stitchlab/stitchlab.hpp"

namespace fs = std::filesystem;
using namespace stitchlab;

namespace {

struct RunConfig {
  std::string data_root;
  std::string out = "stitchlab_out";
  std::string profile = "smoke";
  std::string regime = "trained_trained";
  std::vector<std::string> archs;
  uint64_t seed = 0;
  int smoke_n = 0;  // optional synthetic-fixture override
};

// key = value lines; unknown keys are ignored.
void apply_config_file(RunConfig& cfg, const std::string& path) {
  Manifest kv = read_manifest(path);
  if (kv.count("data_root")) cfg.data_root = kv["data_root"];
  if (kv.count("out")) cfg.out = kv["out"];
  if (kv.count("profile")) cfg.profile = kv["profile"];
  if (kv.count("regime")) cfg.regime = kv["regime"];
  if (kv.count("seed")) cfg.seed = std::stoull(kv["seed"]);
  if (kv.count("archs")) {
    cfg.archs.clear();
    std::stringstream ss(kv["archs"]);
    std::string a;
    while (ss >> a) cfg.archs.push_back(a);
  }
}

void apply_env(RunConfig& cfg, bool out_set_by_flag, bool root_set_by_flag) {
  if (!root_set_by_flag)
    if (const char* v = std::getenv("STITCHLAB_DATA_ROOT")) cfg.data_root = v;
  if (!out_set_by_flag)
    if (const char* v = std::getenv("STITCHLAB_OUT")) cfg.out = v;
}

std::vector<ArchSpec> resolve_archs(const RunConfig& cfg) {
  if (cfg.archs.empty() || (cfg.archs.size() == 1 && cfg.archs[0] == "all"))
    return enumerate_archs();
  std::vector<ArchSpec> out;
  for (const auto& a : cfg.archs) out.push_back(ArchSpec::parse(a));
  return out;
}

BudgetProfile resolve_profile(const RunConfig& cfg) {
  BudgetProfile p = budget_profile(cfg.profile);
  if (cfg.smoke_n > 0 && p.synthetic) {
    p.synthetic_train = cfg.smoke_n;
    p.synthetic_test = std::max(1, cfg.smoke_n / 4);
  }
  return p;
}

void validate_and_dump(const RunConfig& cfg, const BudgetProfile& prof) {
  if (!prof.synthetic) {
    fs::path root = resolve_data_root(cfg.data_root);
    if (root.empty() || !fs::exists(root))
      throw ArgumentError("data root '" + root.string() +
                          "' does not exist (use --data-root or "
                          "STITCHLAB_DATA_ROOT)");
  }
  fs::create_directories(cfg.out);
  Manifest kv;
  kv["data_root"] = cfg.data_root;
  kv["out"] = cfg.out;
  kv["profile"] = cfg.profile;
  kv["regime"] = cfg.regime;
  kv["seed"] = std::to_string(cfg.seed);
  std::string archs;
  for (const auto& a : resolve_archs(cfg)) archs += a.name() + " ";
  kv["archs"] = archs;
  write_manifest(fs::path(cfg.out) / "resolved_config.txt", kv);
}

Hyperparams profile_hp(const BudgetProfile& prof, uint64_t seed) {
  Hyperparams hp;
  hp.epochs = prof.stitch_epochs;
  hp.batch_size = prof.batch_size;
  hp.seed = seed;
  return hp;
}

// ---------------------------------------------------------------------------

int cmd_zoo_train(const RunConfig& cfg) {
  BudgetProfile prof = resolve_profile(cfg);
  validate_and_dump(cfg, prof);
  auto [train, test] = profile_data(prof, resolve_data_root(cfg.data_root),
                                    cfg.seed);
  std::cout << "arch,train_accuracy,test_accuracy\n";
  for (const auto& arch : resolve_archs(cfg)) {
    SmallResNet model = build_model(arch, mix_seed(cfg.seed, 0x200ULL));
    Hyperparams hp = profile_hp(prof, cfg.seed);
    hp.epochs = prof.zoo_epochs;
    TrainReport report = train_network(model, train, test, hp);
    fs::path dir = fs::path(cfg.out) / "zoo" / arch.name();
    Manifest extra;
    extra["profile"] = prof.name;
    extra["zoo_epochs"] = std::to_string(prof.zoo_epochs);
    extra["learning_rate"] = std::to_string(hp.learning_rate);
    extra["batch_size"] = std::to_string(hp.batch_size);
    save_checkpoint(model, dir, extra);
    report.write(dir / "train_report.txt");
    std::cout << arch.name() << "," << *model.train_accuracy << ","
              << *model.test_accuracy << "\n";
  }
  return 0;
}

int cmd_zoo_eval(const RunConfig& cfg, bool random_control) {
  BudgetProfile prof = resolve_profile(cfg);
  validate_and_dump(cfg, prof);
  auto [train, test] = profile_data(prof, resolve_data_root(cfg.data_root),
                                    cfg.seed);
  std::cout << "arch,provenance,test_accuracy\n";
  for (const auto& arch : resolve_archs(cfg)) {
    SmallResNet model =
        random_control
            ? build_model(arch, mix_seed(cfg.seed, 0xC7A1ULL))
            : load_checkpoint(fs::path(cfg.out) / "zoo" / arch.name());
    double acc = evaluate(model, test);
    std::cout << arch.name() << "," << to_string(model.provenance) << ","
              << acc << "\n";
  }
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  BudgetProfile prof = resolve_profile(cfg);
  validate_and_dump(cfg, prof);
  SweepConfig sc;
  sc.archs = resolve_archs(cfg);
  sc.regimes = {parse_regime(cfg.regime)};
  sc.profile = prof;
  sc.zoo_dir = fs::path(cfg.out) / "zoo";
  sc.exp_dir = cfg.out;
  sc.data_root = resolve_data_root(cfg.data_root);
  sc.seed = cfg.seed;
  auto matrices = run_full_sweep(sc);
  for (const auto& m : matrices) {
    std::cout << m.sender_name << " -> " << m.receiver_name << " ["
              << m.regime << "]: " << m.holes().size() << " holes\n";
  }
  return 0;
}

int cmd_stats(const RunConfig& cfg, const std::string& scope) {
  BudgetProfile prof = resolve_profile(cfg);
  validate_and_dump(cfg, prof);
  auto [train, test] = profile_data(prof, resolve_data_root(cfg.data_root),
                                    cfg.seed);
  std::vector<ArchSpec> archs = resolve_archs(cfg);
  std::vector<SmallResNet> models;
  for (const auto& a : archs)
    models.push_back(load_checkpoint(fs::path(cfg.out) / "zoo" / a.name()));

  // corresponding-layer pairs for every ordered pair of loaded models
  std::vector<std::unique_ptr<Stitch>> keep;
  std::vector<StitchPair> pairs;
  for (const auto& sm : models)
    for (const auto& rm : models) {
      auto spts = stitch_points(sm.arch);
      auto rpts = stitch_points(rm.arch);
      int diag = static_cast<int>(std::min(spts.size(), rpts.size()));
      for (int k = 1; k < diag; ++k) {
        StitchSpec spec = plan_stitch(spts[k].shape, rpts[k].shape);
        auto vanilla = std::make_unique<Stitch>(
            build_stitch(spec, mix_seed(cfg.seed, 0xA0 + k)));
        auto sim = std::make_unique<Stitch>(
            build_stitch(spec, mix_seed(cfg.seed, 0xB0 + k)));
        StitchedNetwork net =
            assemble(sm, k, rm, k, build_stitch(spec, mix_seed(cfg.seed, k)));
        net.stitch = *vanilla;
        Hyperparams hp = profile_hp(prof, mix_seed(cfg.seed, 0xF00 + k));
        train_stitch_task(net, train, test, hp);
        *vanilla = net.stitch;
        Hyperparams shp = hp;
        shp.epochs = prof.similarity_epochs;
        train_stitch_similarity(sm, k, rm, k, *sim, train, shp);
        pairs.push_back({&sm, k, &rm, k, vanilla.get(), sim.get()});
        keep.push_back(std::move(vanilla));
        keep.push_back(std::move(sim));
      }
    }
  auto [all, diag] = mse_statistics(pairs, test);
  fs::path stats_dir = fs::path(cfg.out) / "stats";
  if (scope == "all_stitches" || scope == "both")
    write_stats_csv(all, stats_dir / "mse_all_stitches.csv");
  if (scope == "diagonals" || scope == "both")
    write_stats_csv(diag, stats_dir / "mse_diagonals.csv");
  std::cout << "samples: all=" << all.samples << " diagonals=" << diag.samples
            << "\n";
  return 0;
}

int cmd_genimg(const RunConfig& cfg, int count) {
  BudgetProfile prof = resolve_profile(cfg);
  validate_and_dump(cfg, prof);
  auto [train, test] = profile_data(prof, resolve_data_root(cfg.data_root),
                                    cfg.seed);
  fs::path img_dir = fs::path(cfg.out) / "images";
  fs::create_directories(img_dir);
  for (const auto& arch : resolve_archs(cfg)) {
    SmallResNet model =
        load_checkpoint(fs::path(cfg.out) / "zoo" / arch.name());
    Hyperparams hp = profile_hp(prof, cfg.seed);
    for (int i = 0; i <= model.arch.n_blocks(); ++i) {
      auto pairs = generate_images(model, i, train, hp, count);
      for (size_t n = 0; n < pairs.size(); ++n) {
        fs::path file = img_dir / (arch.name() + "_" + std::to_string(i) +
                                   "_" + std::to_string(n) + ".png");
        write_png(file, render_pair(pairs[n]));
      }
      std::cout << arch.name() << " point " << i << ": " << pairs.size()
                << " pairs\n";
    }
  }
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& out) {
  SimilarityMatrix m = read_matrix_csv(csv);
  write_png(out, render_heatmap(m));
  std::cout << "wrote " << out << " (" << m.rows << "x" << m.cols << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-architecture model stitching for Small ResNets"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file;
  bool random_control = false;
  std::string scope = "both";
  int img_count = 8;
  std::string plot_csv, plot_out = "heatmap.png";

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", config_file, "key = value config file");
    c->add_option("--archs", cfg.archs, "arch subset (R1111..R2222, or 'all')");
    c->add_option("--profile", cfg.profile, "budget profile: paper|desk|smoke");
    c->add_option("--seed", cfg.seed, "root RNG seed");
    c->add_option("--data-root", cfg.data_root, "CIFAR-10 binary directory");
    c->add_option("--out", cfg.out, "experiment/output directory");
    c->add_option("--smoke-n", cfg.smoke_n,
                  "override synthetic fixture size (smoke profile)");
  };

  CLI::App* zoo = app.add_subcommand("zoo", "train or evaluate the network zoo");
  zoo->require_subcommand(1);
  CLI::App* zoo_train = zoo->add_subcommand("train", "train the arch subset");
  CLI::App* zoo_eval = zoo->add_subcommand("eval", "evaluate checkpoints");
  zoo_eval->add_flag("--random", random_control,
                     "evaluate fresh random controls instead of checkpoints");
  add_common(zoo_train);
  add_common(zoo_eval);

  CLI::App* sweep = app.add_subcommand("sweep", "similarity-matrix sweep");
  sweep->add_option("--regime", cfg.regime,
                    "trained_trained|random_sender|random_receiver|random_random");
  add_common(sweep);

  CLI::App* stats = app.add_subcommand("stats", "EV/ES/SV MSE statistics");
  stats->add_option("--scope", scope, "diagonals|all_stitches|both");
  add_common(stats);

  CLI::App* genimg = app.add_subcommand("genimg", "stitch-based image generation");
  genimg->add_option("--count", img_count, "pairs per stitch point");
  add_common(genimg);

  CLI::App* plot = app.add_subcommand("plot", "render a matrix CSV as a heatmap");
  plot->add_option("csv", plot_csv, "similarity matrix CSV")->required();
  plot->add_option("--out", plot_out, "output PNG path");

  CLI11_PARSE(app, argc, argv);

  try {
    bool out_flag = false, root_flag = false;
    for (CLI::App* c : {zoo_train, zoo_eval, sweep, stats, genimg}) {
      if (c->count("--config")) apply_config_file(cfg, config_file);
      out_flag |= c->count("--out") > 0;
      root_flag |= c->count("--data-root") > 0;
    }
    apply_env(cfg, out_flag, root_flag);

    if (zoo_train->parsed()) return cmd_zoo_train(cfg);
    if (zoo_eval->parsed()) return cmd_zoo_eval(cfg, random_control);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (stats->parsed()) return cmd_stats(cfg, scope);
    if (genimg->parsed()) return cmd_genimg(cfg, img_count);
    if (plot->parsed()) return cmd_plot(plot_csv, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
