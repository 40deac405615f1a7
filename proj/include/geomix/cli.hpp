#pragma once

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "geomix/io.hpp"
#include "geomix/predict.hpp"
#include "geomix/score.hpp"
#include "geomix/simulate.hpp"

namespace geomix {

namespace cli_detail {

inline std::string resolve(const std::string& dir, const std::string& file) {
  std::filesystem::path p(file);
  if (p.is_absolute()) return file;
  return (std::filesystem::path(dir) / p).string();
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int chains = 0;

  io::Config load() const {
    io::Config cfg = config_path.empty() ? io::Config{} : io::parse_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) cfg.seed = seed;
    if (chains > 0) cfg.chains = chains;
    return cfg;
  }
};

inline void add_common(CLI::App* cmd, CommonOpts& o, bool config_required) {
  auto* copt = cmd->add_option("--config", o.config_path, "configuration file");
  if (config_required) copt->required();
  cmd->add_option("--out-dir", o.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "RNG seed (overrides config)")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--chains", o.chains, "number of MCMC chains (overrides config)");
}

inline ModelKind model_kind(const std::string& name) {
  if (name == "typical") return ModelKind::Typical;
  if (name == "mixture") return ModelKind::Mixture;
  throw ConfigInvalid("model must be 'typical' or 'mixture', got '" + name + "'");
}

inline int run_simulate(const io::Config& cfg, std::ostream& out) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  Mesh mesh = build_mesh(cfg.sim_domain(), cfg.mesh_spacing, cfg.mesh_buffer);
  Rng rng(cfg.seed);
  Design design = simulate_design(cfg.design_spec(), mesh, rng);
  auto [table, truth] = simulate_response(design, cfg.sim_truth(), model_kind(cfg.sim_model),
                                          mesh, rng);
  io::write_footprints(table, resolve(cfg.out_dir, cfg.data_file));
  io::write_raster(design.covariates, resolve(cfg.out_dir, cfg.raster_file));
  {
    std::ofstream t(fs::path(cfg.out_dir) / "truth_points.tsv");
    t << "id\tz\tpi\n";
    for (int i = 0; i < table.n(); ++i)
      t << table.id[i] << '\t' << int(truth.z[i]) << '\t' << io::format_double(truth.pi[i])
        << "\n";
  }
  {
    std::ofstream t(fs::path(cfg.out_dir) / "truth_params.txt");
    const SimTruth& p = truth.params;
    auto vec = [](const VectorXd& v) {
      std::string s;
      for (int i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::format_double(v[i]);
      return s.empty() ? "-" : s;
    };
    t << "model " << cfg.sim_model << "\nmu1 " << p.mu1 << "\nmu0 " << p.mu0 << "\nmu_z "
      << p.mu_z << "\nbeta1 " << vec(p.beta1) << "\nbeta0 " << vec(p.beta0) << "\nbeta_z "
      << vec(p.beta_z) << "\nsigma2_1 " << p.theta1.sigma2 << "\nphi_1 " << p.theta1.phi
      << "\nsigma2_0 " << p.theta0.sigma2 << "\nphi_0 " << p.theta0.phi << "\nsigma2_z "
      << p.thetaz.sigma2 << "\nphi_z " << p.thetaz.phi << "\ntau2_1 " << p.tau21 << "\ntau2_0 "
      << p.tau20 << "\n";
  }
  out << "simulated " << table.n() << " footprints over " << design.covariates.ncols << "x"
      << design.covariates.nrows << " raster (" << design.covariates.bands << " bands) -> "
      << cfg.out_dir << "\n";
  return 0;
}

inline io::FitMeta make_meta(const std::string& model, const FootprintTable& data,
                             const Mesh& mesh, const io::Config& cfg, const Centering& cent) {
  io::FitMeta meta;
  meta.model = model;
  meta.n = data.n();
  meta.p = data.p();
  meta.k = mesh.vertex_count();
  meta.mesh_x0 = mesh.x0();
  meta.mesh_y0 = mesh.y0();
  meta.mesh_spacing = mesh.spacing();
  meta.mesh_nx = mesh.cells_x();
  meta.mesh_ny = mesh.cells_y();
  meta.seed = cfg.seed;
  meta.chains = cfg.chains;
  meta.burn_in = cfg.burn_in;
  meta.draws = cfg.draws;
  meta.thin = cfg.thin;
  meta.centering_mean = cent.mean;
  meta.centering_scale = cent.scale;
  return meta;
}

template <class DrawsT, class FitFn>
int run_fit(const io::Config& cfg, const std::string& model, FitFn&& fit_chain,
            std::ostream& out) {
  namespace fs = std::filesystem;
  FootprintTable data = io::read_footprints(resolve(cfg.out_dir, cfg.data_file));
  // mesh over the union of data and covariate-raster extents, so every
  // prediction cell has basis support; without a raster, the data extent
  BBox bb = data.bbox();
  try {
    RasterGrid g = io::read_raster(resolve(cfg.out_dir, cfg.raster_file));
    bb.xmin = std::min(bb.xmin, g.x_origin);
    bb.ymin = std::min(bb.ymin, g.y_origin);
    bb.xmax = std::max(bb.xmax, g.x_origin + g.ncols * g.cellsize);
    bb.ymax = std::max(bb.ymax, g.y_origin + g.nrows * g.cellsize);
  } catch (const Error&) {
  }
  Mesh mesh = build_mesh(bb, cfg.mesh_spacing, cfg.mesh_buffer);
  const int nc = std::max(1, cfg.chains);
  std::vector<DrawsT> chains(nc);
  std::vector<std::exception_ptr> errors(nc);
  {
    std::vector<std::thread> threads;
    for (int c = 0; c < nc; ++c) {
      threads.emplace_back([&, c] {
        try {
          const std::uint64_t s = c == 0 ? cfg.seed : mix_seed(cfg.seed, c);
          chains[c] = fit_chain(data, mesh, s);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  fs::create_directories(cfg.out_dir);
  io::write_meta(make_meta(model, data, mesh, cfg, chains[0].centering),
                 (fs::path(cfg.out_dir) / "meta.txt").string());
  for (int c = 0; c < nc; ++c) {
    if constexpr (std::is_same_v<DrawsT, TypicalDraws>)
      io::write_typical_draws(chains[c], cfg.out_dir, "_chain" + std::to_string(c));
    else
      io::write_mixture_draws(chains[c], cfg.out_dir, "_chain" + std::to_string(c));
  }
  DrawsT merged = io::merge_chains(std::move(chains));
  if constexpr (std::is_same_v<DrawsT, TypicalDraws>)
    io::write_typical_draws(merged, cfg.out_dir, "");
  else
    io::write_mixture_draws(merged, cfg.out_dir, "");
  out << "fit " << model << ": n=" << data.n() << " k=" << mesh.vertex_count() << " chains="
      << nc << " draws=" << merged.states.size() << " -> " << cfg.out_dir << "\n";
  return 0;
}

inline int run_predict(const io::Config& cfg, std::ostream& out) {
  namespace fs = std::filesystem;
  io::FitMeta meta = io::read_meta((fs::path(cfg.out_dir) / "meta.txt").string());
  Mesh mesh = meta.mesh();
  RasterGrid grid = io::read_raster(resolve(cfg.out_dir, cfg.raster_file));
  if (grid.bands != meta.p)
    throw DimensionMismatch("raster bands != fitted covariate count");
  const std::uint64_t key = mix_seed(cfg.seed, 0x70726564ULL);
  PredictionSummary sum;
  bool mixture = false;
  if (meta.model == "typical") {
    TypicalDraws d = io::read_typical_draws(cfg.out_dir, meta);
    sum = predict_grid(d, grid, mesh, key, cfg.predict_chunk, cfg.predict_transform);
  } else if (meta.model == "mixture") {
    MixtureDraws d = io::read_mixture_draws(cfg.out_dir, meta);
    sum = predict_grid(d, grid, mesh, key, cfg.predict_chunk, cfg.predict_transform);
    mixture = true;
  } else {
    throw HeaderError("meta model '" + meta.model + "' not recognized");
  }
  RasterGrid pred;
  pred.ncols = grid.ncols;
  pred.nrows = grid.nrows;
  pred.x_origin = grid.x_origin;
  pred.y_origin = grid.y_origin;
  pred.cellsize = grid.cellsize;
  pred.bands = mixture ? 6 : 4;
  pred.values = {sum.mean, sum.sd, sum.q025, sum.q975};
  if (mixture) {
    pred.values.push_back(sum.class_prob);
    pred.values.push_back(sum.class_mode);
  }
  io::write_raster(pred, (fs::path(cfg.out_dir) / "prediction.raster").string());
  out << "predicted " << grid.cell_count() << " cells (" << pred.bands
      << " summary bands) -> prediction.raster\n";
  return 0;
}

inline int run_score(const io::Config& cfg, std::ostream& out) {
  namespace fs = std::filesystem;
  io::FitMeta meta = io::read_meta((fs::path(cfg.out_dir) / "meta.txt").string());
  Mesh mesh = meta.mesh();
  FootprintTable data = io::read_footprints(resolve(cfg.out_dir, cfg.data_file));
  VectorXd cpo;
  if (meta.model == "typical") {
    TypicalDraws d = io::read_typical_draws(cfg.out_dir, meta);
    cpo = cpo_scores(d, data, mesh);
  } else {
    MixtureDraws d = io::read_mixture_draws(cfg.out_dir, meta);
    cpo = cpo_scores(d, data, mesh);
  }
  const double total = total_log_cpo(cpo);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "score.txt");
    f << "model " << meta.model << "\nn " << data.n() << "\ntotal_log_cpo "
      << io::format_double(total) << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "cpo.tsv");
    f << "id\tcpo\tlog_cpo\n";
    for (int i = 0; i < data.n(); ++i)
      f << data.id[i] << '\t' << io::format_double(cpo[i]) << '\t'
        << io::format_double(std::log(cpo[i])) << "\n";
  }
  out << "total log-CPO (" << meta.model << ", n=" << data.n()
      << "): " << io::format_double(total) << "\n";
  return 0;
}

inline int run_cv(const io::Config& cfg, std::ostream& out) {
  namespace fs = std::filesystem;
  FootprintTable data = io::read_footprints(resolve(cfg.out_dir, cfg.data_file));
  Mesh mesh = build_mesh(data.bbox(), cfg.mesh_spacing, cfg.mesh_buffer);
  CvScheme scheme;
  if (cfg.cv_scheme == "random") {
    scheme = CvScheme::RandomTenPercent;
  } else if (cfg.cv_scheme == "by-orbit") {
    scheme = CvScheme::ByOrbit;
  } else {
    throw ConfigInvalid("cv_scheme must be 'random' or 'by-orbit'");
  }
  CvModels models;
  models.run_typical = cfg.cv_model == "both" || cfg.cv_model == "typical";
  models.run_mixture = cfg.cv_model == "both" || cfg.cv_model == "mixture";
  if (!models.run_typical && !models.run_mixture)
    throw ConfigInvalid("cv_model must be 'typical', 'mixture' or 'both'");
  models.typical = cfg.typical_config();
  models.mixture = cfg.mixture_config();
  auto folds = cross_validate(data, mesh, models, scheme, cfg.cv_fraction, cfg.seed);

  fs::create_directories(cfg.out_dir);
  std::ofstream f(fs::path(cfg.out_dir) / "cv_report.tsv");
  f << "fold\torbit\tmodel\tn_test\ttotal_log_density\tr2_tilde\tcoverage_95\n";
  for (const auto& fold : folds) {
    auto row = [&](const char* model, const ScoreReport& r) {
      f << fold.fold << '\t' << fold.orbit_label << '\t' << model << '\t'
        << fold.test_rows.size() << '\t' << io::format_double(r.total_log_cpo) << '\t'
        << io::format_double(r.r2_tilde) << '\t' << io::format_double(r.coverage_95) << "\n";
    };
    if (fold.has_typical) row("typical", fold.typical);
    if (fold.has_mixture) row("mixture", fold.mixture);
  }
  out << "cross-validation (" << cfg.cv_scheme << "): " << folds.size()
      << " fold(s) -> cv_report.tsv\n";
  return 0;
}

}  // namespace cli_detail

/// CLI entry point; returns the process exit status.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"geomix: latent-class spatial mixture geostatistics"};
  app.require_subcommand(1);

  CommonOpts sim_o, fit_t_o, fit_m_o, pred_o, score_o, cv_o;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_common(sim, sim_o, false);
  auto* fit_t = app.add_subcommand("fit-typical", "fit the typical spatial model");
  add_common(fit_t, fit_t_o, true);
  auto* fit_m = app.add_subcommand("fit-mixture", "fit the spatial mixture model");
  add_common(fit_m, fit_m_o, true);
  auto* pred = app.add_subcommand("predict", "posterior predictive raster from a fit");
  add_common(pred, pred_o, true);
  auto* score = app.add_subcommand("score", "CPO scores of a fit on the training data");
  add_common(score, score_o, true);
  auto* cv = app.add_subcommand("cv", "cross-validated model comparison");
  add_common(cv, cv_o, true);

  std::vector<const char*> argv;
  argv.push_back("geomix");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 64;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_o.load(), out);
    if (fit_t->parsed()) {
      io::Config cfg = fit_t_o.load();
      return run_fit<TypicalDraws>(
          cfg, "typical",
          [&](const FootprintTable& d, const Mesh& m, std::uint64_t s) {
            TypicalConfig c = cfg.typical_config();
            c.seed = s;
            return fit_typical(d, m, c);
          },
          out);
    }
    if (fit_m->parsed()) {
      io::Config cfg = fit_m_o.load();
      return run_fit<MixtureDraws>(
          cfg, "mixture",
          [&](const FootprintTable& d, const Mesh& m, std::uint64_t s) {
            MixtureConfig c = cfg.mixture_config();
            c.seed = s;
            return fit_mixture(d, m, c);
          },
          out);
    }
    if (pred->parsed()) return run_predict(pred_o.load(), out);
    if (score->parsed()) return run_score(score_o.load(), out);
    if (cv->parsed()) return run_cv(cv_o.load(), out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace geomix
