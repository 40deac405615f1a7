#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "geomix/data.hpp"
#include "geomix/errors.hpp"
#include "geomix/gibbs_mixture.hpp"
#include "geomix/gibbs_typical.hpp"
#include "geomix/simulate.hpp"

namespace geomix::io {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, const std::string& what, int line) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " value '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& what, int line) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " value '" + s + "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Footprint tables (CSV with header)
// ---------------------------------------------------------------------------

inline FootprintTable read_footprints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty footprint file " + path);
  auto cols = detail::split(detail::trim(line), ',');
  int c_id = -1, c_e = -1, c_n = -1, c_o = -1, c_y = -1;
  std::vector<int> band_cols;
  for (int c = 0; c < static_cast<int>(cols.size()); ++c) {
    const std::string name = detail::trim(cols[c]);
    if (name == "id") {
      c_id = c;
    } else if (name == "easting") {
      c_e = c;
    } else if (name == "northing") {
      c_n = c;
    } else if (name == "orbit") {
      c_o = c;
    } else if (name == "response") {
      c_y = c;
    } else if (name.rfind("band_", 0) == 0) {
      const int b = static_cast<int>(detail::parse_int(name.substr(5), "band index", 1));
      if (b != static_cast<int>(band_cols.size()) + 1)
        throw SchemaError("band columns must be contiguous band_1..band_p; saw " + name);
      band_cols.push_back(c);
    } else {
      throw SchemaError("unknown column '" + name + "'");
    }
  }
  std::string missing;
  for (auto [col, name] : {std::pair{c_id, "id"}, {c_e, "easting"}, {c_n, "northing"},
                           {c_o, "orbit"}, {c_y, "response"}}) {
    if (col < 0) missing += missing.empty() ? name : std::string(", ") + name;
  }
  if (!missing.empty()) throw SchemaError("missing columns: " + missing);

  std::vector<long long> id;
  std::vector<double> e, n, y;
  std::vector<int> orb;
  std::vector<std::vector<double>> bands(band_cols.size());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    auto f = detail::split(t, ',');
    if (f.size() != cols.size())
      throw ParseError("line " + std::to_string(lineno) + ": expected " +
                       std::to_string(cols.size()) + " fields, got " + std::to_string(f.size()));
    id.push_back(detail::parse_int(detail::trim(f[c_id]), "id", lineno));
    e.push_back(detail::parse_double(detail::trim(f[c_e]), "easting", lineno));
    n.push_back(detail::parse_double(detail::trim(f[c_n]), "northing", lineno));
    orb.push_back(static_cast<int>(detail::parse_int(detail::trim(f[c_o]), "orbit", lineno)));
    y.push_back(detail::parse_double(detail::trim(f[c_y]), "response", lineno));
    for (std::size_t b = 0; b < band_cols.size(); ++b)
      bands[b].push_back(detail::parse_double(detail::trim(f[band_cols[b]]), "band", lineno));
  }
  const int rows = static_cast<int>(y.size());
  FootprintTable tab;
  tab.id = std::move(id);
  tab.easting = Eigen::Map<VectorXd>(e.data(), rows);
  tab.northing = Eigen::Map<VectorXd>(n.data(), rows);
  tab.orbit = std::move(orb);
  tab.response = Eigen::Map<VectorXd>(y.data(), rows);
  tab.covariates.resize(rows, bands.size());
  for (std::size_t b = 0; b < bands.size(); ++b)
    tab.covariates.col(b) = Eigen::Map<VectorXd>(bands[b].data(), rows);
  for (int i = 0; i < rows; ++i)
    if (!std::isfinite(tab.easting[i]) || !std::isfinite(tab.northing[i]) ||
        !std::isfinite(tab.response[i]))
      throw ParseError("non-finite coordinate or response at row " + std::to_string(i));
  return tab;
}

inline void write_footprints(const FootprintTable& tab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << "id,easting,northing,orbit,response";
  for (int b = 1; b <= tab.p(); ++b) out << ",band_" << b;
  out << "\n";
  for (int i = 0; i < tab.n(); ++i) {
    out << tab.id[i] << ',' << format_double(tab.easting[i]) << ','
        << format_double(tab.northing[i]) << ',' << tab.orbit[i] << ','
        << format_double(tab.response[i]);
    for (int b = 0; b < tab.p(); ++b) out << ',' << format_double(tab.covariates(i, b));
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Rasters (text header + band-major row-major values)
// ---------------------------------------------------------------------------

inline void write_raster(const RasterGrid& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw HeaderError("cannot write " + path);
  out << "ncols " << g.ncols << "\nnrows " << g.nrows << "\nx_origin "
      << format_double(g.x_origin) << "\ny_origin " << format_double(g.y_origin)
      << "\ncellsize " << format_double(g.cellsize) << "\nbands " << g.bands << "\n";
  for (int b = 0; b < g.bands; ++b)
    for (int r = 0; r < g.nrows; ++r) {
      for (int c = 0; c < g.ncols; ++c) {
        if (c) out << ' ';
        out << format_double(g.values[b][g.index(c, r)]);
      }
      out << "\n";
    }
}

inline RasterGrid read_raster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HeaderError("cannot open " + path);
  RasterGrid g;
  auto expect = [&](const char* key) -> double {
    std::string k;
    double v;
    if (!(in >> k >> v) || k != key) throw HeaderError("expected header key '" + std::string(key) + "'");
    return v;
  };
  g.ncols = static_cast<int>(expect("ncols"));
  g.nrows = static_cast<int>(expect("nrows"));
  g.x_origin = expect("x_origin");
  g.y_origin = expect("y_origin");
  g.cellsize = expect("cellsize");
  g.bands = static_cast<int>(expect("bands"));
  if (g.ncols < 1 || g.nrows < 1 || g.bands < 0 || !(g.cellsize > 0))
    throw HeaderError("invalid raster header in " + path);
  const long long count = static_cast<long long>(g.cell_count()) * g.bands;
  g.values.assign(g.bands, VectorXd(g.cell_count()));
  for (int b = 0; b < g.bands; ++b)
    for (int i = 0; i < g.cell_count(); ++i) {
      double v;
      if (!(in >> v))
        throw CountMismatch("raster declares " + std::to_string(count) + " cells; fewer provided");
      g.values[b][i] = v;
    }
  double extra;
  if (in >> extra) throw CountMismatch("raster has more values than declared");
  return g;
}

// ---------------------------------------------------------------------------
// Binary matrix container for effect-vector draws
// ---------------------------------------------------------------------------

inline void write_matrix(const MatrixXd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw HeaderError("cannot write " + path);
  const char magic[8] = {'G', 'M', 'X', 'M', 'A', 'T', '0', '1'};
  out.write(magic, 8);
  const std::uint64_t rows = m.rows(), cols = m.cols();
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
}

inline MatrixXd read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HeaderError("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::string(magic, 8) != "GMXMAT01")
    throw HeaderError("bad matrix magic in " + path);
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  MatrixXd m(rows, cols);
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), 8);
      if (in.gcount() != 8) throw CountMismatch("matrix file truncated: " + path);
      m(r, c) = v;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Fit metadata and draw persistence
// ---------------------------------------------------------------------------

struct FitMeta {
  std::string model;  // "typical" or "mixture"
  int n = 0, p = 0, k = 0;
  double mesh_x0 = 0, mesh_y0 = 0, mesh_spacing = 0;
  int mesh_nx = 0, mesh_ny = 0;
  std::uint64_t seed = 0;
  int chains = 1, burn_in = 0, draws = 0, thin = 1;
  VectorXd centering_mean, centering_scale;

  Mesh mesh() const { return Mesh(mesh_x0, mesh_y0, mesh_spacing, mesh_nx, mesh_ny); }
  Centering centering() const { return {centering_mean, centering_scale}; }
};

inline void write_meta(const FitMeta& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw HeaderError("cannot write " + path);
  auto vec = [](const VectorXd& v) {
    std::string s;
    for (int i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s.empty() ? "-" : s;
  };
  out << "model " << m.model << "\nn " << m.n << "\np " << m.p << "\nk " << m.k
      << "\nmesh_x0 " << format_double(m.mesh_x0) << "\nmesh_y0 " << format_double(m.mesh_y0)
      << "\nmesh_spacing " << format_double(m.mesh_spacing) << "\nmesh_nx " << m.mesh_nx
      << "\nmesh_ny " << m.mesh_ny << "\nseed " << m.seed << "\nchains " << m.chains
      << "\nburn_in " << m.burn_in << "\ndraws " << m.draws << "\nthin " << m.thin
      << "\ncentering_mean " << vec(m.centering_mean) << "\ncentering_scale "
      << vec(m.centering_scale) << "\n";
}

inline FitMeta read_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HeaderError("cannot open " + path);
  FitMeta m;
  std::string key, val;
  auto parse_vec = [](const std::string& s) {
    VectorXd v;
    if (s == "-") return v;
    auto parts = detail::split(s, ',');
    v.resize(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) v[i] = std::stod(parts[i]);
    return v;
  };
  while (in >> key >> val) {
    if (key == "model") m.model = val;
    else if (key == "n") m.n = std::stoi(val);
    else if (key == "p") m.p = std::stoi(val);
    else if (key == "k") m.k = std::stoi(val);
    else if (key == "mesh_x0") m.mesh_x0 = std::stod(val);
    else if (key == "mesh_y0") m.mesh_y0 = std::stod(val);
    else if (key == "mesh_spacing") m.mesh_spacing = std::stod(val);
    else if (key == "mesh_nx") m.mesh_nx = std::stoi(val);
    else if (key == "mesh_ny") m.mesh_ny = std::stoi(val);
    else if (key == "seed") m.seed = std::stoull(val);
    else if (key == "chains") m.chains = std::stoi(val);
    else if (key == "burn_in") m.burn_in = std::stoi(val);
    else if (key == "draws") m.draws = std::stoi(val);
    else if (key == "thin") m.thin = std::stoi(val);
    else if (key == "centering_mean") m.centering_mean = parse_vec(val);
    else if (key == "centering_scale") m.centering_scale = parse_vec(val);
    else throw HeaderError("unknown meta key '" + key + "'");
  }
  return m;
}

inline void write_typical_draws(const TypicalDraws& d, const std::string& dir,
                                const std::string& suffix = "") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int m = static_cast<int>(d.states.size());
  const int p = m > 0 ? static_cast<int>(d.states[0].beta.size()) : 0;
  std::ofstream out(fs::path(dir) / ("params" + suffix + ".tsv"));
  out << "mu";
  for (int b = 1; b <= p; ++b) out << "\tbeta_" << b;
  out << "\ttau2\tsigma2\tphi\n";
  MatrixXd w(m, m > 0 ? d.states[0].w.size() : 0);
  for (int t = 0; t < m; ++t) {
    const TypicalState& s = d.states[t];
    out << format_double(s.mu);
    for (int b = 0; b < p; ++b) out << '\t' << format_double(s.beta[b]);
    out << '\t' << format_double(s.tau2) << '\t' << format_double(s.theta.sigma2) << '\t'
        << format_double(s.theta.phi) << "\n";
    w.row(t) = s.w.transpose();
  }
  out.close();
  write_matrix(w, (fs::path(dir) / ("w" + suffix + ".mat")).string());
}

inline TypicalDraws read_typical_draws(const std::string& dir, const FitMeta& meta,
                                       const std::string& suffix = "") {
  namespace fs = std::filesystem;
  TypicalDraws d;
  d.centering = meta.centering();
  d.seed = meta.seed;
  d.burn_in = meta.burn_in;
  d.thin = meta.thin;
  MatrixXd w = read_matrix((fs::path(dir) / ("w" + suffix + ".mat")).string());
  std::ifstream in(fs::path(dir) / ("params" + suffix + ".tsv"));
  if (!in) throw HeaderError("cannot open params" + suffix + ".tsv in " + dir);
  std::string line;
  std::getline(in, line);  // header
  int t = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto f = detail::split(line, '\t');
    if (static_cast<int>(f.size()) != meta.p + 4)
      throw ParseError("params row has " + std::to_string(f.size()) + " fields");
    TypicalState s;
    s.mu = std::stod(f[0]);
    s.beta.resize(meta.p);
    for (int b = 0; b < meta.p; ++b) s.beta[b] = std::stod(f[1 + b]);
    s.tau2 = std::stod(f[meta.p + 1]);
    s.theta.sigma2 = std::stod(f[meta.p + 2]);
    s.theta.phi = std::stod(f[meta.p + 3]);
    if (t >= w.rows()) throw CountMismatch("more parameter rows than effect rows");
    s.w = w.row(t).transpose();
    d.states.push_back(std::move(s));
    ++t;
  }
  if (t != w.rows()) throw CountMismatch("fewer parameter rows than effect rows");
  return d;
}

inline void write_mixture_draws(const MixtureDraws& d, const std::string& dir,
                                const std::string& suffix = "") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int m = static_cast<int>(d.states.size());
  const int p = m > 0 ? static_cast<int>(d.states[0].beta1.size()) : 0;
  const int k = m > 0 ? static_cast<int>(d.states[0].w1.size()) : 0;
  const int n = m > 0 ? static_cast<int>(d.states[0].z.size()) : 0;
  std::ofstream out(fs::path(dir) / ("params" + suffix + ".tsv"));
  out << "mu1";
  for (int b = 1; b <= p; ++b) out << "\tbeta1_" << b;
  out << "\ttau2_1\tsigma2_1\tphi_1\tmu0";
  for (int b = 1; b <= p; ++b) out << "\tbeta0_" << b;
  out << "\ttau2_0\tsigma2_0\tphi_0\tmu_z";
  for (int b = 1; b <= p; ++b) out << "\tbetaz_" << b;
  out << "\tsigma2_z\tphi_z\tn1\tmean_y1\tmean_y0\n";
  MatrixXd w1(m, k), w0(m, k), wz(m, k), zm(m, n);
  for (int t = 0; t < m; ++t) {
    const MixtureState& s = d.states[t];
    out << format_double(s.mu1);
    for (int b = 0; b < p; ++b) out << '\t' << format_double(s.beta1[b]);
    out << '\t' << format_double(s.tau21) << '\t' << format_double(s.theta1.sigma2) << '\t'
        << format_double(s.theta1.phi) << '\t' << format_double(s.mu0);
    for (int b = 0; b < p; ++b) out << '\t' << format_double(s.beta0[b]);
    out << '\t' << format_double(s.tau20) << '\t' << format_double(s.theta0.sigma2) << '\t'
        << format_double(s.theta0.phi) << '\t' << format_double(s.mu_z);
    for (int b = 0; b < p; ++b) out << '\t' << format_double(s.beta_z[b]);
    out << '\t' << format_double(s.thetaz.sigma2) << '\t' << format_double(s.thetaz.phi) << '\t'
        << s.n1 << '\t' << format_double(s.mean_y1) << '\t' << format_double(s.mean_y0) << "\n";
    w1.row(t) = s.w1.transpose();
    w0.row(t) = s.w0.transpose();
    wz.row(t) = s.wz.transpose();
    for (int i = 0; i < n; ++i) zm(t, i) = s.z[i];
  }
  out.close();
  write_matrix(w1, (fs::path(dir) / ("w1" + suffix + ".mat")).string());
  write_matrix(w0, (fs::path(dir) / ("w0" + suffix + ".mat")).string());
  write_matrix(wz, (fs::path(dir) / ("wz" + suffix + ".mat")).string());
  write_matrix(zm, (fs::path(dir) / ("z" + suffix + ".mat")).string());
}

inline MixtureDraws read_mixture_draws(const std::string& dir, const FitMeta& meta,
                                       const std::string& suffix = "") {
  namespace fs = std::filesystem;
  MixtureDraws d;
  d.centering = meta.centering();
  d.seed = meta.seed;
  d.burn_in = meta.burn_in;
  d.thin = meta.thin;
  MatrixXd w1 = read_matrix((fs::path(dir) / ("w1" + suffix + ".mat")).string());
  MatrixXd w0 = read_matrix((fs::path(dir) / ("w0" + suffix + ".mat")).string());
  MatrixXd wz = read_matrix((fs::path(dir) / ("wz" + suffix + ".mat")).string());
  MatrixXd zm = read_matrix((fs::path(dir) / ("z" + suffix + ".mat")).string());
  std::ifstream in(fs::path(dir) / ("params" + suffix + ".tsv"));
  if (!in) throw HeaderError("cannot open params" + suffix + ".tsv in " + dir);
  std::string line;
  std::getline(in, line);
  const int p = meta.p;
  int t = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto f = detail::split(line, '\t');
    const int expected = 3 * p + 14;
    if (static_cast<int>(f.size()) != expected)
      throw ParseError("params row has " + std::to_string(f.size()) + " fields, expected " +
                       std::to_string(expected));
    int c = 0;
    MixtureState s;
    auto next = [&]() { return std::stod(f[c++]); };
    s.mu1 = next();
    s.beta1.resize(p);
    for (int b = 0; b < p; ++b) s.beta1[b] = next();
    s.tau21 = next();
    s.theta1.sigma2 = next();
    s.theta1.phi = next();
    s.mu0 = next();
    s.beta0.resize(p);
    for (int b = 0; b < p; ++b) s.beta0[b] = next();
    s.tau20 = next();
    s.theta0.sigma2 = next();
    s.theta0.phi = next();
    s.mu_z = next();
    s.beta_z.resize(p);
    for (int b = 0; b < p; ++b) s.beta_z[b] = next();
    s.thetaz.sigma2 = next();
    s.thetaz.phi = next();
    s.n1 = static_cast<int>(next());
    s.mean_y1 = next();
    s.mean_y0 = next();
    if (t >= w1.rows()) throw CountMismatch("more parameter rows than effect rows");
    s.w1 = w1.row(t).transpose();
    s.w0 = w0.row(t).transpose();
    s.wz = wz.row(t).transpose();
    s.z.resize(zm.cols());
    for (int i = 0; i < zm.cols(); ++i) s.z[i] = zm(t, i) > 0.5 ? 1 : 0;
    d.states.push_back(std::move(s));
    ++t;
  }
  if (t != w1.rows()) throw CountMismatch("fewer parameter rows than effect rows");
  return d;
}

inline TypicalDraws merge_chains(std::vector<TypicalDraws> chains) {
  TypicalDraws out = std::move(chains.front());
  for (std::size_t c = 1; c < chains.size(); ++c) {
    auto& src = chains[c].states;
    out.states.insert(out.states.end(), std::make_move_iterator(src.begin()),
                      std::make_move_iterator(src.end()));
    out.loop_factorizations += chains[c].loop_factorizations;
  }
  return out;
}

inline MixtureDraws merge_chains(std::vector<MixtureDraws> chains) {
  MixtureDraws out = std::move(chains.front());
  for (std::size_t c = 1; c < chains.size(); ++c) {
    auto& src = chains[c].states;
    out.states.insert(out.states.end(), std::make_move_iterator(src.begin()),
                      std::make_move_iterator(src.end()));
    out.loop_factorizations += chains[c].loop_factorizations;
    out.nr_factorizations += chains[c].nr_factorizations;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration file (key = value lines, unknown keys rejected)
// ---------------------------------------------------------------------------

struct Config {
  // paths
  std::string data_file = "footprints.csv";
  std::string raster_file = "covariates.raster";
  std::string out_dir = "out";
  // mesh
  double mesh_spacing = 1000.0;
  double mesh_buffer = 7000.0;
  // mcmc
  int burn_in = 1000, draws = 1000, thin = 1, chains = 1;
  std::uint64_t seed = 20260810;
  double adapt_target = 0.3;
  bool standardize = false;
  // PC priors (typical model and per mixture process)
  double pc_alpha_sigma = 0.01, pc_alpha_phi = 0.01;
  double pc_sigma0 = 1.0, pc_phi0 = 2000.0;
  double pc_sigma0_1 = 0.5, pc_sigma0_0 = 0.2, pc_sigma0_z = 10.0;
  double pc_phi0_1 = 1000.0, pc_phi0_0 = 2000.0, pc_phi0_z = 2000.0;
  // EM initializer
  double em_mu1 = 3.0, em_mu0 = 1.0;
  bool laplace_mh_correction = false;
  // prediction
  int predict_chunk = 4000;
  std::string predict_transform = "none";
  // cross-validation
  std::string cv_scheme = "random";
  double cv_fraction = 0.1;
  std::string cv_model = "both";
  // simulation
  std::string sim_model = "mixture";
  double sim_width = 12000.0, sim_height = 12000.0;
  int sim_orbit_count = 6, sim_track_count = 4;
  double sim_along_spacing = 60.0, sim_across_spacing = 600.0;
  std::vector<double> sim_azimuths;
  int sim_bands = 3;
  double sim_cov_sigma2 = 1.0, sim_cov_phi = 3000.0;
  double sim_cellsize = 120.0;
  double sim_mu1 = 3.0, sim_mu0 = 1.0, sim_mu_z = 0.0;
  std::vector<double> sim_beta1{0.3, -0.2, 0.1};
  std::vector<double> sim_beta0{0.1, -0.05, 0.02};
  std::vector<double> sim_beta_z{0.8, -0.5, 0.3};
  double sim_sigma2_1 = 0.09, sim_phi_1 = 1600.0;
  double sim_sigma2_0 = 0.36, sim_phi_0 = 2500.0;
  double sim_sigma2_z = 2.25, sim_phi_z = 2000.0;
  double sim_tau2_1 = 0.0729, sim_tau2_0 = 0.0484;

  TypicalConfig typical_config() const {
    TypicalConfig c;
    fill_mcmc(c);
    c.prior = {pc_sigma0, pc_alpha_sigma, pc_phi0, pc_alpha_phi};
    return c;
  }

  MixtureConfig mixture_config() const {
    MixtureConfig c;
    fill_mcmc(c);
    c.prior1 = {pc_sigma0_1, pc_alpha_sigma, pc_phi0_1, pc_alpha_phi};
    c.prior0 = {pc_sigma0_0, pc_alpha_sigma, pc_phi0_0, pc_alpha_phi};
    c.priorz = {pc_sigma0_z, pc_alpha_sigma, pc_phi0_z, pc_alpha_phi};
    c.em_mu1 = em_mu1;
    c.em_mu0 = em_mu0;
    c.laplace_mh_correction = laplace_mh_correction;
    return c;
  }

  BBox sim_domain() const { return {0.0, 0.0, sim_width, sim_height}; }

  DesignSpec design_spec() const {
    DesignSpec s;
    s.domain = sim_domain();
    s.track_count = sim_track_count;
    s.along_spacing = sim_along_spacing;
    s.across_spacing = sim_across_spacing;
    s.orbit_count = sim_orbit_count;
    s.orbit_azimuth_deg = sim_azimuths;
    s.bands = sim_bands;
    s.covariate_gp = {sim_cov_sigma2, sim_cov_phi};
    s.covariate_cellsize = sim_cellsize;
    return s;
  }

  SimTruth sim_truth() const {
    SimTruth t;
    t.mu1 = sim_mu1;
    t.mu0 = sim_mu0;
    t.mu_z = sim_mu_z;
    auto pat = [&](const std::vector<double>& v) {
      VectorXd b = VectorXd::Zero(sim_bands);
      if (!v.empty())
        for (int i = 0; i < sim_bands; ++i) b[i] = v[i % v.size()];
      return b;
    };
    t.beta1 = pat(sim_beta1);
    t.beta0 = pat(sim_beta0);
    t.beta_z = pat(sim_beta_z);
    t.theta1 = {sim_sigma2_1, sim_phi_1};
    t.theta0 = {sim_sigma2_0, sim_phi_0};
    t.thetaz = {sim_sigma2_z, sim_phi_z};
    t.tau21 = sim_tau2_1;
    t.tau20 = sim_tau2_0;
    return t;
  }

 private:
  void fill_mcmc(McmcConfig& c) const {
    c.burn_in = burn_in;
    c.draws = draws;
    c.thin = thin;
    c.seed = seed;
    c.adapt_target = adapt_target;
    c.standardize = standardize;
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigInvalid("config key '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const auto& part : split(v, ',')) out.push_back(std::stod(trim(part)));
  return out;
}

}  // namespace detail

inline void apply_config_kv(Config& c, const std::string& key, const std::string& val) {
  auto d = [&] {
    try { return std::stod(val); }
    catch (...) { throw ConfigInvalid("config key '" + key + "' expects a number, got '" + val + "'"); }
  };
  auto i = [&] {
    try { return std::stoi(val); }
    catch (...) { throw ConfigInvalid("config key '" + key + "' expects an integer, got '" + val + "'"); }
  };
  if (key == "data_file") c.data_file = val;
  else if (key == "raster_file") c.raster_file = val;
  else if (key == "out_dir") c.out_dir = val;
  else if (key == "mesh_spacing") c.mesh_spacing = d();
  else if (key == "mesh_buffer") c.mesh_buffer = d();
  else if (key == "burn_in") c.burn_in = i();
  else if (key == "draws") c.draws = i();
  else if (key == "thin") c.thin = i();
  else if (key == "chains") c.chains = i();
  else if (key == "seed") c.seed = std::stoull(val);
  else if (key == "adapt_target") c.adapt_target = d();
  else if (key == "standardize") c.standardize = detail::parse_bool(val, key);
  else if (key == "pc_alpha_sigma") c.pc_alpha_sigma = d();
  else if (key == "pc_alpha_phi") c.pc_alpha_phi = d();
  else if (key == "pc_sigma0") c.pc_sigma0 = d();
  else if (key == "pc_phi0") c.pc_phi0 = d();
  else if (key == "pc_sigma0_1") c.pc_sigma0_1 = d();
  else if (key == "pc_sigma0_0") c.pc_sigma0_0 = d();
  else if (key == "pc_sigma0_z") c.pc_sigma0_z = d();
  else if (key == "pc_phi0_1") c.pc_phi0_1 = d();
  else if (key == "pc_phi0_0") c.pc_phi0_0 = d();
  else if (key == "pc_phi0_z") c.pc_phi0_z = d();
  else if (key == "em_mu1") c.em_mu1 = d();
  else if (key == "em_mu0") c.em_mu0 = d();
  else if (key == "laplace_mh_correction") c.laplace_mh_correction = detail::parse_bool(val, key);
  else if (key == "predict_chunk") c.predict_chunk = i();
  else if (key == "predict_transform") c.predict_transform = val;
  else if (key == "cv_scheme") c.cv_scheme = val;
  else if (key == "cv_fraction") c.cv_fraction = d();
  else if (key == "cv_model") c.cv_model = val;
  else if (key == "sim_model") c.sim_model = val;
  else if (key == "sim_width") c.sim_width = d();
  else if (key == "sim_height") c.sim_height = d();
  else if (key == "sim_orbit_count") c.sim_orbit_count = i();
  else if (key == "sim_track_count") c.sim_track_count = i();
  else if (key == "sim_along_spacing") c.sim_along_spacing = d();
  else if (key == "sim_across_spacing") c.sim_across_spacing = d();
  else if (key == "sim_azimuths") c.sim_azimuths = detail::parse_list(val);
  else if (key == "sim_bands") c.sim_bands = i();
  else if (key == "sim_cov_sigma2") c.sim_cov_sigma2 = d();
  else if (key == "sim_cov_phi") c.sim_cov_phi = d();
  else if (key == "sim_cellsize") c.sim_cellsize = d();
  else if (key == "sim_mu1") c.sim_mu1 = d();
  else if (key == "sim_mu0") c.sim_mu0 = d();
  else if (key == "sim_mu_z") c.sim_mu_z = d();
  else if (key == "sim_beta1") c.sim_beta1 = detail::parse_list(val);
  else if (key == "sim_beta0") c.sim_beta0 = detail::parse_list(val);
  else if (key == "sim_beta_z") c.sim_beta_z = detail::parse_list(val);
  else if (key == "sim_sigma2_1") c.sim_sigma2_1 = d();
  else if (key == "sim_phi_1") c.sim_phi_1 = d();
  else if (key == "sim_sigma2_0") c.sim_sigma2_0 = d();
  else if (key == "sim_phi_0") c.sim_phi_0 = d();
  else if (key == "sim_sigma2_z") c.sim_sigma2_z = d();
  else if (key == "sim_phi_z") c.sim_phi_z = d();
  else if (key == "sim_tau2_1") c.sim_tau2_1 = d();
  else if (key == "sim_tau2_0") c.sim_tau2_0 = d();
  else throw ConfigInvalid("unknown config key '" + key + "'");
}

inline Config parse_config_text(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    const auto hash = t.find('#');
    if (hash != std::string::npos) t = detail::trim(t.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigInvalid("config line " + std::to_string(lineno) + " is not 'key = value'");
    apply_config_kv(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return c;
}

inline Config parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace geomix::io
