// rollcs: command-line front end.
//
//   rollcs psf          synthesize a speckle PSF
//   rollcs simulate     render a ground-truth scene and its rolling-shutter frame
//   rollcs reconstruct  recover the video from one frame
//   rollcs evaluate     compare a reconstruction against the truth
//   rollcs sweep        sparsity / success-rate phase transition
//
// Every subcommand takes --config FILE.json; keys are long option names with
// '-' or '_' separators, and flags given on the command line win.
//
// Exit status: 0 ok, 1 numerical failure, 2 usage, configuration or I/O error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rollcs/rollcs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rollcs;

namespace {

constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// JSON config: fill options the command line left empty.

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

void apply_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  const auto cfg = io::read_json(path);
  if (!cfg.is_object()) throw UsageError(path + ": config must be a JSON object");
  const json& body = cfg.contains(sub.get_name()) && cfg[sub.get_name()].is_object() ? cfg[sub.get_name()] : cfg;
  for (const auto& [key, value] : body.items()) {
    if (key == "config" || value.is_object()) continue;
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + name);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError(path + ": unknown key '" + key + "' for '" + sub.get_name() + "'");
    }
    if (opt->count() > 0) continue;
    if (value.is_array()) {
      for (const auto& e : value) opt->add_result(json_scalar(e));
    } else {
      opt->add_result(json_scalar(value));
    }
    opt->run_callback();
  }
}

/// Resolved option values keyed by long name; feeding this object back through
/// --config reproduces the run.
json resolved_args(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_min() == 0) {
      out[name] = opt->count() > 0 && opt->as<bool>();
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      if (opt->get_expected_max() > 1) {
        out[name] = r;
      } else {
        out[name] = r.back();
      }
    } else if (!opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

json dims_json(const VideoDims& d) { return {{"rows", d.rows}, {"cols", d.cols}, {"bins", d.bins}}; }

bool is_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  char m[2] = {};
  is.read(m, 2);
  return m[0] == 'P' && (m[1] == '2' || m[1] == '5');
}

// "r,c,period[,phase[,amplitude]]"
BlinkingSource parse_source(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  if (parts.size() < 3 || parts.size() > 5) {
    throw UsageError("--source expects row,col,period[,phase[,amplitude]], got '" + spec + "'");
  }
  BlinkingSource s;
  try {
    s.row = std::stoul(parts[0]);
    s.col = std::stoul(parts[1]);
    s.period_bins = std::stoul(parts[2]);
    if (parts.size() > 3) s.phase_bins = std::stoul(parts[3]);
    if (parts.size() > 4) s.amplitude = std::stod(parts[4]);
  } catch (const std::exception&) {
    throw UsageError("cannot parse --source '" + spec + "'");
  }
  return s;
}

// ---------------------------------------------------------------------------
// psf

struct PsfArgs {
  std::string config;
  bool synth = false;
  std::string load;
  std::size_t size = 108;
  std::size_t rows = 0, cols = 0;
  std::size_t psf_scale = 2;
  double pupil_frac = 0.5;
  std::uint64_t seed = 0;
  std::string out, pgm, report;
  std::size_t rows_per_bin = 2;
  double coverage_threshold = 0.1;
};

void add_psf(CLI::App& app, PsfArgs& a) {
  auto* s = app.add_subcommand("psf", "synthesize or ingest a PSF and check row coverage");
  s->add_option("--config", a.config, "JSON file with option defaults");
  s->add_flag("--synth", a.synth, "synthesize a speckle PSF (default unless --load)");
  s->add_option("--load", a.load, "measured point-object image (PGM or RCS1)");
  s->add_option("--size", a.size, "sensor rows = cols")->capture_default_str();
  s->add_option("--psf-scale", a.psf_scale, "synthetic PSF grid = scale x size")->capture_default_str();
  s->add_option("--rows", a.rows, "synthetic PSF grid rows (overrides --psf-scale)");
  s->add_option("--cols", a.cols, "synthetic PSF grid cols (default: rows)");
  s->add_option("--pupil-frac", a.pupil_frac, "pupil radius as a fraction of the half grid")->capture_default_str();
  s->add_option("--seed", a.seed, "phase screen seed")->capture_default_str();
  s->add_option("--rows-per-bin", a.rows_per_bin, "rows per bin for the coverage check")->capture_default_str();
  s->add_option("--coverage-threshold", a.coverage_threshold, "minimum row energy / mean")->capture_default_str();
  s->add_option("--out", a.out, "output PSF (RCS1)");
  s->add_option("--pgm", a.pgm, "optional 8-bit preview");
  s->add_option("--report", a.report, "report JSON (default: stdout only)");
}

int run_psf(CLI::App& sub, PsfArgs& a) {
  apply_config(sub, a.config);
  require(a.out, "--out");
  if (a.synth && !a.load.empty()) throw UsageError("give --synth or --load, not both");
  json rep;
  PsfImage psf;
  if (!a.load.empty()) {
    psf = load_psf(a.load);
    rep["source"] = a.load;
  } else {
    if (a.rows == 0) a.rows = a.size * a.psf_scale;
    if (a.cols == 0) a.cols = a.rows;
    const PupilSpec spec{a.rows, a.cols, a.pupil_frac, a.seed};
    psf = synthesize_speckle_psf(spec);
    rep["source"] = "synthetic";
    rep["pupil_radius_frac"] = a.pupil_frac;
    rep["pupil_radius_px"] = spec.radius_pixels();
    rep["seed"] = a.seed;
  }
  ensure_parent(a.out);
  io::save_image(a.out, psf.data);
  rep["psf"] = a.out;
  rep["rows"] = psf.rows();
  rep["cols"] = psf.cols();
  rep["center"] = {psf.center.row, psf.center.col};
  try {
    rep["grain_fwhm_px"] = speckle_grain_fwhm(psf);
  } catch (const ConfigurationError&) {
    rep["grain_fwhm_px"] = nullptr;  // flat PSF
  }
  rep["contrast_squared"] = speckle_contrast_squared(psf);
  if (!a.pgm.empty()) {
    ensure_parent(a.pgm);
    const auto sc = io::write_pgm(a.pgm, psf.data.values(), psf.rows(), psf.cols(), io::full_range(psf.data.values()));
    rep["pgm"] = {{"path", a.pgm}, {"scaling", {{"lo", sc.lo}, {"hi", sc.hi}}}};
  }
  const auto cov = check_coverage(psf, ShutterSchedule::top_to_bottom(a.size, a.rows_per_bin, 1.0),
                                  a.coverage_threshold);
  rep["coverage"] = {{"pass", cov.pass},
                     {"sensor_rows", a.size},
                     {"threshold_frac", cov.threshold_frac},
                     {"top_min_fraction", cov.top.min_fraction},
                     {"bottom_min_fraction", cov.bottom.min_fraction},
                     {"top_rows_reached", cov.top.rows_reached},
                     {"bottom_rows_reached", cov.bottom.rows_reached}};
  rep["psf_args"] = resolved_args(sub);
  if (!a.report.empty()) {
    ensure_parent(a.report);
    io::write_json(a.report, rep);
  }
  std::cout << rep.dump(2) << "\n";
  std::cerr << "coverage " << (cov.pass ? "PASS" : "FAIL") << " (min row fraction top "
            << cov.top.min_fraction << ", bottom " << cov.bottom.min_fraction << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  std::string scene = "glyphs";
  std::size_t rows = 0, cols = 0, size = 108, rows_per_bin = 2;
  std::optional<std::size_t> bins;
  double row_period = 9.6e-6;
  std::optional<double> exposure;
  std::string psf_path;
  std::size_t psf_scale = 2;
  double pupil_frac = 0.5;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> psf_seed, scene_seed, noise_seed;
  std::size_t glyphs = 0, glyph_size = 5, spikes = 0;
  std::vector<std::string> sources;
  std::optional<double> snr;
  std::string out_frame, out_truth, out_psf, sidecar;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  auto* s = app.add_subcommand("simulate", "render a scene and its rolling-shutter frame");
  s->add_option("--config", a.config, "JSON file with option defaults");
  s->add_option("--scene", a.scene, "glyphs | blinking | spikes")->capture_default_str();
  s->add_option("--size", a.size, "sensor rows = cols")->capture_default_str();
  s->add_option("--rows", a.rows, "sensor rows (overrides --size)");
  s->add_option("--cols", a.cols, "sensor cols (default: rows)");
  s->add_option("--rows-per-bin", a.rows_per_bin, "rows read out per time bin")->capture_default_str();
  s->add_option("--bins", a.bins, "time bins; must equal ceil(rows / rows-per-bin)");
  s->add_option("--row-period", a.row_period, "seconds between consecutive bins")->capture_default_str();
  s->add_option("--exposure", a.exposure, "per-row exposure in seconds (default: row period)");
  s->add_option("--psf", a.psf_path, "measured PSF (RCS1 or PGM); synthesized when absent");
  s->add_option("--psf-scale", a.psf_scale, "synthetic PSF grid = scale x sensor")->capture_default_str();
  s->add_option("--pupil-frac", a.pupil_frac, "synthetic pupil radius fraction")->capture_default_str();
  s->add_option("--seed", a.seed, "master seed")->capture_default_str();
  s->add_option("--psf-seed", a.psf_seed, "phase screen seed (default: from --seed)");
  s->add_option("--scene-seed", a.scene_seed, "scene layout seed (default: from --seed)");
  s->add_option("--noise-seed", a.noise_seed, "noise seed (default: from --seed)");
  s->add_option("--glyphs", a.glyphs, "number of glyphs (default: one per bin)");
  s->add_option("--glyph-size", a.glyph_size, "glyph height in pixels")->capture_default_str();
  s->add_option("--source", a.sources, "blinking source row,col,period[,phase[,amplitude]]");
  s->add_option("--spikes", a.spikes, "number of random spikes");
  s->add_option("--snr", a.snr, "noise level: mean positive pixel / sigma (noiseless when absent)");
  s->add_option("--out-frame", a.out_frame, "output sensor frame (RCS1)");
  s->add_option("--out-truth", a.out_truth, "output ground-truth video (default: <frame>.truth.rcs)");
  s->add_option("--out-psf", a.out_psf, "output PSF (default: <frame>.psf.rcs)");
  s->add_option("--sidecar", a.sidecar, "parameter record (default: <frame>.json)");
}

int run_simulate(CLI::App& sub, SimulateArgs& a) {
  apply_config(sub, a.config);
  require(a.out_frame, "--out-frame");
  if (a.rows == 0) a.rows = a.size;
  if (a.cols == 0) a.cols = a.rows;
  if (a.out_truth.empty()) a.out_truth = a.out_frame + ".truth.rcs";
  if (a.out_psf.empty()) a.out_psf = a.out_frame + ".psf.rcs";
  if (a.sidecar.empty()) a.sidecar = a.out_frame + ".json";

  const auto schedule = ShutterSchedule::top_to_bottom(a.rows, a.rows_per_bin, a.row_period, a.exposure);
  if (!schedule.short_exposure_valid()) {
    throw ConfigurationError("exposure " + std::to_string(schedule.exposure_s()) +
                             " s exceeds the row period " + std::to_string(a.row_period) +
                             " s; overlapping-row exposure is not modeled");
  }
  if (a.bins && *a.bins != schedule.n_bins()) {
    throw UsageError("--bins " + std::to_string(*a.bins) + " disagrees with " + std::to_string(a.rows) +
                     " rows at " + std::to_string(a.rows_per_bin) + " rows per bin (" +
                     std::to_string(schedule.n_bins()) + " bins)");
  }
  const VideoDims dims{a.rows, a.cols, schedule.n_bins()};
  const std::uint64_t psf_seed = a.psf_seed.value_or(cell_seed(a.seed, 1, 0));
  const std::uint64_t scene_seed = a.scene_seed.value_or(cell_seed(a.seed, 2, 0));
  const std::uint64_t noise_seed = a.noise_seed.value_or(cell_seed(a.seed, 3, 0));

  json side;
  side["format_version"] = 1;
  side["scene"] = a.scene;
  side["dims"] = dims_json(dims);
  side["schedule"] = io::schedule_to_json(schedule);
  side["effective_fps"] = effective_fps(schedule);
  side["seeds"] = {{"master", a.seed}, {"psf", psf_seed}, {"scene", scene_seed}, {"noise", noise_seed}};

  PsfImage psf;
  if (a.psf_path.empty()) {
    psf = synthesize_speckle_psf({a.rows * a.psf_scale, a.cols * a.psf_scale, a.pupil_frac, psf_seed});
    side["psf"] = {{"source", "synthetic"}, {"pupil_radius_frac", a.pupil_frac}, {"scale", a.psf_scale}};
  } else {
    psf = load_psf(a.psf_path, {}, is_pgm(a.psf_path));
    side["psf"] = {{"source", a.psf_path}};
  }
  side["psf"]["rows"] = psf.rows();
  side["psf"]["cols"] = psf.cols();
  side["psf"]["center"] = {psf.center.row, psf.center.col};
  side["psf"]["grain_fwhm_px"] = speckle_grain_fwhm(psf);

  VideoTensor truth(dims);
  if (a.scene == "glyphs") {
    const auto n = a.glyphs == 0 ? dims.bins : a.glyphs;
    const auto placed = place_glyphs(dims, n, a.glyph_size, scene_seed);
    truth = render_glyphs(dims, placed);
    json g = json::array();
    for (const auto& p : placed) {
      g.push_back({{"digit", p.digit}, {"bin", p.bin}, {"row", p.row}, {"col", p.col},
                   {"height", p.height}, {"width", p.width}});
    }
    side["glyph_size"] = a.glyph_size;
    side["glyph_atlas_version"] = kGlyphAtlasVersion;
    side["glyphs"] = g;
  } else if (a.scene == "blinking") {
    if (a.sources.empty()) throw UsageError("--scene blinking needs at least one --source");
    std::vector<BlinkingSource> src;
    for (const auto& s : a.sources) src.push_back(parse_source(s));
    truth = gen_blinking_sources(dims, src);
    json arr = json::array();
    for (const auto& s : src) {
      arr.push_back({{"row", s.row},
                     {"col", s.col},
                     {"period_bins", s.period_bins},
                     {"phase_bins", s.phase_bins},
                     {"amplitude", s.amplitude},
                     {"frequency_hz", effective_fps(schedule) / static_cast<double>(s.period_bins)}});
    }
    side["blinking_sources"] = arr;
  } else if (a.scene == "spikes") {
    if (a.spikes == 0) throw UsageError("--scene spikes needs --spikes > 0");
    truth = gen_random_spikes(dims, a.spikes, scene_seed);
    side["spikes"] = a.spikes;
  } else {
    throw UsageError("unknown --scene '" + a.scene + "' (expected glyphs, blinking or spikes)");
  }

  const ForwardOperator op(psf, schedule, dims);
  auto frame = op.forward(truth);
  if (a.snr) {
    side["snr"] = *a.snr;
    side["noise_sigma"] = noise_sigma(frame, *a.snr);
    frame = add_gaussian_noise(frame, *a.snr, noise_seed);
  } else {
    side["snr"] = nullptr;
    side["noise_sigma"] = 0.0;
  }

  for (const auto* p : {&a.out_frame, &a.out_truth, &a.out_psf, &a.sidecar}) ensure_parent(*p);
  io::save_image(a.out_frame, frame);
  io::save_video(a.out_truth, truth);
  io::save_image(a.out_psf, psf.data);
  side["files"] = {{"frame", a.out_frame}, {"truth", a.out_truth}, {"psf", a.out_psf}};
  side["simulate"] = resolved_args(sub);
  io::write_json(a.sidecar, side);
  std::cerr << "wrote " << a.out_frame << " (" << a.rows << "x" << a.cols << ", " << dims.bins
            << " bins, " << effective_fps(schedule) << " fps)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs {
  std::string config;
  std::string frame, sidecar, psf;
  std::size_t rows_per_bin = 2;
  double row_period = 9.6e-6;
  std::optional<double> tau, tau_rel;
  std::size_t max_iters = 500;
  double rel_tol = 1e-6;
  std::string transform = "identity";
  bool allow_negative = false;
  bool no_precondition = false;
  std::uint64_t seed = 0;
  std::string out, pgm_dir, report;
};

void add_reconstruct(CLI::App& app, ReconstructArgs& a) {
  auto* s = app.add_subcommand("reconstruct", "recover the video from one frame");
  s->add_option("--config", a.config, "JSON file with option defaults");
  s->add_option("--frame", a.frame, "sensor frame (RCS1 or PGM)");
  s->add_option("--sidecar", a.sidecar, "simulate sidecar; supplies schedule and PSF");
  s->add_option("--psf", a.psf, "PSF file (overrides the sidecar)");
  s->add_option("--rows-per-bin", a.rows_per_bin, "schedule when no sidecar is given")->capture_default_str();
  s->add_option("--row-period", a.row_period, "schedule when no sidecar is given")->capture_default_str();
  s->add_option("--tau", a.tau, "absolute l1 weight");
  s->add_option("--tau-rel", a.tau_rel, "l1 weight relative to tau_max (default 1e-3)");
  s->add_option("--max-iters", a.max_iters, "iteration cap")->capture_default_str();
  s->add_option("--rel-tol", a.rel_tol, "relative objective change that stops the solver")->capture_default_str();
  s->add_option("--transform", a.transform, "identity | dct3 | temporal_difference")->capture_default_str();
  s->add_flag("--allow-negative", a.allow_negative, "drop the nonnegativity constraint");
  s->add_flag("--no-precondition", a.no_precondition, "plain FISTA steps");
  s->add_option("--seed", a.seed, "power-method seed")->capture_default_str();
  s->add_option("--out", a.out, "output video (RCS1)");
  s->add_option("--pgm-dir", a.pgm_dir, "per-bin 8-bit PGM sequence");
  s->add_option("--report", a.report, "report JSON (default: <out>.report.json)");
}

int run_reconstruct(CLI::App& sub, ReconstructArgs& a) {
  apply_config(sub, a.config);
  require(a.frame, "--frame");
  require(a.out, "--out");
  if (a.tau && a.tau_rel) throw UsageError("give --tau or --tau-rel, not both");
  if (a.report.empty()) a.report = a.out + ".report.json";

  const auto frame = io::load_frame(a.frame);
  std::optional<ShutterSchedule> schedule;
  std::string psf_path = a.psf;
  if (!a.sidecar.empty()) {
    const auto side = io::read_json(a.sidecar);
    schedule = io::schedule_from_json(side);
    if (psf_path.empty() && side.contains("files")) psf_path = side["files"].value("psf", "");
  } else {
    schedule = ShutterSchedule::top_to_bottom(frame.rows(), a.rows_per_bin, a.row_period);
  }
  require(psf_path, "--psf (or a sidecar naming one)");
  if (schedule->n_rows() != frame.rows()) {
    throw DimensionError("frame '" + a.frame + "' is " + std::to_string(frame.rows()) + "x" +
                         std::to_string(frame.cols()) + " but the schedule from '" +
                         (a.sidecar.empty() ? std::string("flags") : a.sidecar) + "' has " +
                         std::to_string(schedule->n_rows()) + " rows");
  }
  if (!a.sidecar.empty()) {
    const auto side = io::read_json(a.sidecar);
    if (side.contains("dims") && side["dims"].value("cols", frame.cols()) != frame.cols()) {
      throw DimensionError("frame '" + a.frame + "' has " + std::to_string(frame.cols()) +
                           " cols but sidecar '" + a.sidecar + "' records " +
                           std::to_string(side["dims"]["cols"].get<std::size_t>()));
    }
  }
  const auto psf = load_psf(psf_path, {}, is_pgm(psf_path));
  const VideoDims dims{frame.rows(), frame.cols(), schedule->n_bins()};
  const ForwardOperator op(psf, *schedule, dims);

  SolverConfig cfg;
  cfg.max_iters = a.max_iters;
  cfg.rel_tol = a.rel_tol;
  cfg.transform = parse_transform_kind(a.transform);
  cfg.nonneg = !a.allow_negative;
  cfg.precondition = !a.no_precondition;
  cfg.seed = a.seed;
  const double tmax = tau_max(op, frame);
  cfg.tau = a.tau ? *a.tau : a.tau_rel.value_or(1e-3) * tmax;

  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = solve(op, frame, cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ensure_parent(a.out);
  io::save_video(a.out, rep.solution);

  json out{{"frame", a.frame},
           {"psf", psf_path},
           {"video", a.out},
           {"dims", dims_json(dims)},
           {"tau", cfg.tau},
           {"tau_max", tmax},
           {"transform", std::string(to_string(cfg.transform))},
           {"nonneg", cfg.nonneg},
           {"preconditioned", rep.preconditioned},
           {"lipschitz", rep.lipschitz},
           {"step", rep.step},
           {"iterations_run", rep.iterations_run},
           {"converged", rep.converged},
           {"restarts", rep.restarts},
           {"wall_time_s", wall},
           {"objective_trace", rep.objective_trace}};
  out["reconstruct"] = resolved_args(sub);
  const double dense = fraction_above(rep.solution, 0.01);
  out["fraction_above_1pct_of_max"] = dense;
  out["warnings"] = json::array();
  if (dense > 0.5) {
    const std::string w = "reconstruction is not sparse: " + std::to_string(100.0 * dense) +
                          "% of entries exceed 1% of the maximum; tau may be too small";
    out["warnings"].push_back(w);
    std::cerr << "warning: " << w << "\n";
  }
  if (!a.pgm_dir.empty()) {
    fs::create_directories(a.pgm_dir);
    const auto sc = io::full_range(rep.solution.values());
    for (std::size_t t = 0; t < dims.bins; ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "bin_%04zu.pgm", t);
      io::write_pgm((fs::path(a.pgm_dir) / name).string(), rep.solution.bin(t), dims.rows, dims.cols, sc);
    }
    out["pgm"] = {{"dir", a.pgm_dir}, {"pattern", "bin_%04d.pgm"}, {"scaling", {{"lo", sc.lo}, {"hi", sc.hi}}}};
  }
  ensure_parent(a.report);
  io::write_json(a.report, out);
  std::cerr << "solved in " << rep.iterations_run << " iterations (" << wall << " s), converged "
            << (rep.converged ? "yes" : "no") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string config;
  std::string truth, estimate, sidecar, out, csv;
  double support_threshold = 0.5;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* s = app.add_subcommand("evaluate", "compare a reconstruction against the truth");
  s->add_option("--config", a.config, "JSON file with option defaults");
  s->add_option("--truth", a.truth, "ground-truth video (RCS1)");
  s->add_option("--estimate", a.estimate, "reconstructed video (RCS1)");
  s->add_option("--sidecar", a.sidecar, "simulate sidecar; adds a frequency table for blinking scenes");
  s->add_option("--support-threshold", a.support_threshold, "support = entries above this times max(truth)")
      ->capture_default_str();
  s->add_option("--out", a.out, "metrics JSON (default: stdout only)");
  s->add_option("--csv", a.csv, "metrics as metric,value rows");
}

int run_evaluate(CLI::App& sub, EvaluateArgs& a) {
  apply_config(sub, a.config);
  require(a.truth, "--truth");
  require(a.estimate, "--estimate");
  const auto truth = io::load_video(a.truth);
  const auto est = io::load_video(a.estimate);
  if (truth.dims() != est.dims()) {
    throw DimensionError("truth '" + a.truth + "' is " + to_string(truth.dims()) + " but estimate '" +
                         a.estimate + "' is " + to_string(est.dims()));
  }
  const auto tv = truth.values();
  const double peak = *std::max_element(tv.begin(), tv.end());
  const auto f1 = support_f1(truth, est, a.support_threshold * peak);
  json out{{"truth", a.truth},
           {"estimate", a.estimate},
           {"psnr_db", psnr(truth, est)},
           {"relative_error", relative_error(truth, est)},
           {"support_f1", f1.f1},
           {"support_threshold", a.support_threshold * peak}};
  if (!a.sidecar.empty()) {
    const auto side = io::read_json(a.sidecar);
    if (side.contains("blinking_sources")) {
      const double fps = side.value("effective_fps", 0.0);
      const double bins = static_cast<double>(truth.dims().bins);
      json table = json::array();
      for (const auto& s : side["blinking_sources"]) {
        const auto r = s.at("row").get<std::size_t>();
        const auto c = s.at("col").get<std::size_t>();
        const auto kt = dominant_frequency(pixel_trace(truth, r, c));
        json row{{"row", r},
                 {"col", c},
                 {"period_bins", s.at("period_bins")},
                 {"truth_bin", kt},
                 {"truth_hz", static_cast<double>(kt) * fps / bins}};
        try {
          const auto ke = dominant_frequency(pixel_trace(est, r, c));
          row["estimate_bin"] = ke;
          row["estimate_hz"] = static_cast<double>(ke) * fps / bins;
          row["match"] = ke == kt;
        } catch (const NoDominantFrequencyError&) {
          row["estimate_bin"] = nullptr;
          row["estimate_hz"] = nullptr;
          row["match"] = false;
        }
        table.push_back(row);
      }
      out["frequencies"] = table;
    }
  }
  if (!a.out.empty()) {
    ensure_parent(a.out);
    io::write_json(a.out, out);
  }
  if (!a.csv.empty()) {
    ensure_parent(a.csv);
    std::ofstream os(a.csv);
    if (!os) throw IoError("cannot open '" + a.csv + "' for writing");
    os.precision(17);
    os << "metric,value\n";
    for (const char* key : {"psnr_db", "relative_error", "support_f1"}) os << key << "," << out[key].get<double>() << "\n";
    if (out.contains("frequencies")) {
      for (const auto& f : out["frequencies"]) {
        const auto tag = "source_" + std::to_string(f["row"].get<std::size_t>()) + "_" +
                         std::to_string(f["col"].get<std::size_t>());
        os << tag << "_truth_bin," << f["truth_bin"].dump() << "\n";
        os << tag << "_estimate_bin," << f["estimate_bin"].dump() << "\n";
      }
    }
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::string config;
  std::size_t rows = 32, cols = 32, bins = 8;
  std::vector<std::size_t> k;
  std::size_t trials = 10;
  std::optional<double> snr;
  double tau_rel = 1e-4;
  std::size_t max_iters = 500;
  double rel_tol = 1e-6;
  double pupil_frac = 1.0;
  std::size_t psf_scale = 2;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double success_threshold = 0.1;
  std::string csv, json_path;
};

void add_sweep(CLI::App& app, SweepArgs& a) {
  auto* s = app.add_subcommand("sweep", "success rate versus sparsity");
  s->add_option("--config", a.config, "JSON file with option defaults");
  s->add_option("--rows", a.rows, "scene rows")->capture_default_str();
  s->add_option("--cols", a.cols, "scene cols")->capture_default_str();
  s->add_option("--bins", a.bins, "time bins (rows must be divisible)")->capture_default_str();
  s->add_option("--k", a.k, "sparsity levels");
  s->add_option("--trials", a.trials, "trials per level (>= 10)")->capture_default_str();
  s->add_option("--snr", a.snr, "noise level (noiseless when absent)");
  s->add_option("--tau-rel", a.tau_rel, "tau = tau_rel * tau_max per trial")->capture_default_str();
  s->add_option("--max-iters", a.max_iters, "solver iteration cap")->capture_default_str();
  s->add_option("--rel-tol", a.rel_tol, "solver stopping tolerance")->capture_default_str();
  s->add_option("--pupil-frac", a.pupil_frac, "pupil radius fraction")->capture_default_str();
  s->add_option("--psf-scale", a.psf_scale, "PSF grid = scale x scene")->capture_default_str();
  s->add_option("--seed", a.seed, "base seed")->capture_default_str();
  s->add_option("--threads", a.threads, "worker threads")->capture_default_str();
  s->add_option("--success-threshold", a.success_threshold, "relative error counted as success")
      ->capture_default_str();
  s->add_option("--csv", a.csv, "output table (CSV)");
  s->add_option("--json", a.json_path, "output table (JSON)");
}

int run_sweep(CLI::App& sub, SweepArgs& a) {
  apply_config(sub, a.config);
  require(a.csv, "--csv");
  if (a.k.empty()) throw UsageError("--k needs at least one sparsity level");
  SweepConfig cfg;
  cfg.dims = {a.rows, a.cols, a.bins};
  cfg.k_list = a.k;
  cfg.trials = a.trials;
  cfg.snr = a.snr;
  cfg.tau_rel = a.tau_rel;
  cfg.solver.max_iters = a.max_iters;
  cfg.solver.rel_tol = a.rel_tol;
  cfg.pupil_radius_frac = a.pupil_frac;
  cfg.psf_scale = a.psf_scale;
  cfg.base_seed = a.seed;
  cfg.threads = a.threads;
  cfg.success_threshold = a.success_threshold;
  const auto table = phase_transition_sweep(cfg);
  ensure_parent(a.csv);
  {
    std::ofstream os(a.csv);
    if (!os) throw IoError("cannot open '" + a.csv + "' for writing");
    os << table.to_csv();
  }
  auto j = table.to_json();
  j["dims"] = dims_json(cfg.dims);
  j["tau_rel"] = cfg.tau_rel;
  j["base_seed"] = cfg.base_seed;
  j["snr"] = a.snr ? json(*a.snr) : json(nullptr);
  j["sweep"] = resolved_args(sub);
  if (!a.json_path.empty()) {
    ensure_parent(a.json_path);
    io::write_json(a.json_path, j);
  }
  std::cout << table.to_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rolling-shutter compressive video from a single speckle-blurred frame"};
  app.require_subcommand(1);
  PsfArgs psf_args;
  SimulateArgs sim_args;
  ReconstructArgs rec_args;
  EvaluateArgs eval_args;
  SweepArgs sweep_args;
  add_psf(app, psf_args);
  add_simulate(app, sim_args);
  add_reconstruct(app, rec_args);
  add_evaluate(app, eval_args);
  add_sweep(app, sweep_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "psf") return run_psf(*sub, psf_args);
    if (name == "simulate") return run_simulate(*sub, sim_args);
    if (name == "reconstruct") return run_reconstruct(*sub, rec_args);
    if (name == "evaluate") return run_evaluate(*sub, eval_args);
    if (name == "sweep") return run_sweep(*sub, sweep_args);
  } catch (const UsageError& e) {
    std::cerr << "rollcs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    std::cerr << "rollcs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "rollcs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigurationError& e) {
    std::cerr << "rollcs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "rollcs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "rollcs " << name << ": malformed JSON: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "rollcs " << name << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "rollcs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
