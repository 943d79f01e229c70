// semloc: generate synthetic runs, localize, run the particle filter
// baseline, evaluate trajectories and run class-dropout ablations.
//
// Exit codes: 0 success, 2 usage or input error, 3 tracking lost.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "semloc/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semloc;

namespace {

constexpr const char* kArtifactVersion = "1.0.0";
constexpr int kExitUsage = 2;
constexpr int kExitLost = 3;

// ---------------------------------------------------------------- run dirs

struct RunDir
{
  fs::path root;
  fs::path map() const { return root / "map.smesh"; }
  fs::path camera() const { return root / "camera.txt"; }
  fs::path frames() const { return root / "frames"; }
  fs::path odometry() const { return root / "odometry.csv"; }
  fs::path ground_truth() const { return root / "ground_truth.csv"; }
};

void write_camera(const fs::path& p, const CameraIntrinsics& k)
{
  auto f = io::open_out(p);
  f << std::setprecision(17) << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' '
    << k.height << '\n';
}

CameraIntrinsics read_camera(const fs::path& p)
{
  auto f = io::open_in(p);
  CameraIntrinsics k;
  if (!(f >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) throw ParseError("bad camera file " + p.string());
  k.validate();
  return k;
}

std::string frame_name(int id)
{
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << id << ".pgm";
  return os.str();
}

struct LoadedRun
{
  SemanticMesh map;
  ClassTable classes;
  CameraIntrinsics camera;
  std::vector<LabelImage> frames;
  std::vector<Pose> odometry;  // odometry[i] moves frame i to i + 1
  std::vector<io::PoseRecord> ground_truth;
};

LoadedRun load_run(const RunDir& dir)
{
  LoadedRun r;
  auto mf = io::read_smesh(dir.map());
  r.map = std::move(mf.mesh);
  r.classes = std::move(mf.classes);
  r.camera = read_camera(dir.camera());

  std::vector<fs::path> files;
  if (!fs::is_directory(dir.frames())) throw ParseError("missing frames directory " + dir.frames().string());
  for (const auto& e : fs::directory_iterator(dir.frames()))
    if (e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyInput("no frames in " + dir.frames().string());
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (files[i].filename() != frame_name(static_cast<int>(i)))
      throw ParseError("frames must be numbered consecutively from 000000.pgm; found " + files[i].filename().string());
    LabelImage img = io::read_pgm(files[i]);
    if (img.width() != r.camera.width || img.height() != r.camera.height)
      throw DimensionError("frame " + files[i].filename().string() + " does not match the camera");
    validate_labels(img, r.classes);
    r.frames.push_back(std::move(img));
  }

  const auto odo = io::read_pose_csv(dir.odometry());
  for (std::size_t i = 0; i < odo.size(); ++i) {
    if (odo[i].frame_id != static_cast<int>(i) + 1)
      throw ParseError("odometry rows must have frame ids 1, 2, ...; row " + std::to_string(i) + " has " +
                       std::to_string(odo[i].frame_id));
    r.odometry.push_back(odo[i].pose);
  }
  if (r.odometry.size() + 1 < r.frames.size()) throw ParseError("odometry has fewer steps than frames");
  if (fs::exists(dir.ground_truth())) r.ground_truth = io::read_pose_csv(dir.ground_truth());
  return r;
}

// ---------------------------------------------------------------- helpers

std::vector<double> parse_numbers(const std::string& text, std::size_t count, const std::string& what)
{
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream is(s);
  std::vector<double> v;
  double x;
  while (is >> x) v.push_back(x);
  if (!is.eof() || v.size() != count)
    throw InvalidArgument(what + " needs " + std::to_string(count) + " numbers, got '" + text + "'");
  return v;
}

json pose_json(const Pose& p)
{
  const auto q = p.quaternion();
  return {p.translation.x(), p.translation.y(), p.translation.z(), q.x(), q.y(), q.z(), q.w()};
}

json vec_json(const Vector6d& v) { return std::vector<double>(v.data(), v.data() + 6); }

fs::path default_manifest(const fs::path& out)
{
  fs::path m = out;
  m.replace_extension(".manifest.json");
  return m;
}

void write_manifest(const fs::path& path, const std::string& command, const std::vector<std::string>& args,
                    json config, json inputs, json outputs)
{
  json m;
  m["artifact_version"] = kArtifactVersion;
  m["command"] = command;
  m["args"] = args;
  m["config"] = std::move(config);
  m["inputs"] = std::move(inputs);
  m["outputs"] = std::move(outputs);
  auto f = io::open_out(path);
  f << std::setw(2) << m << '\n';
}

// Options shared by localize, pf and ablate.
struct TrackOptions
{
  std::string run;
  std::string init;
  std::string init_offset;
  std::string out;
  std::string manifest;
  int threads = 1;
};

Pose initial_pose(const TrackOptions& o, const LoadedRun& run, json& cfg)
{
  Pose init;
  if (!o.init.empty()) {
    init = io::parse_pose(o.init);
  } else if (!run.ground_truth.empty() && run.ground_truth.front().frame_id == 0) {
    init = run.ground_truth.front().pose;
  } else {
    throw InvalidArgument("no --init given and the run has no ground truth for frame 0");
  }
  if (!o.init_offset.empty()) {
    const auto v = parse_numbers(o.init_offset, 3, "--init-offset");
    if (v[2] < 0 || v[2] != std::floor(v[2])) throw InvalidArgument("--init-offset seed must be a non-negative integer");
    init = apply_random_offset(init, v[0], v[1], static_cast<std::uint64_t>(v[2]));
    cfg["init_offset"] = {v[0], v[1], v[2]};
  }
  cfg["init"] = pose_json(init);
  return init;
}

void add_track_options(CLI::App* app, TrackOptions& o, bool with_out = true)
{
  app->add_option("--run", o.run, "run directory written by 'generate'")->required();
  app->add_option("--init", o.init, "initial pose \"tx ty tz qx qy qz qw\" (default: ground truth of frame 0)");
  app->add_option("--init-offset", o.init_offset, "seeded random initial offset \"dt_m dr_deg seed\"");
  if (with_out) app->add_option("--out", o.out, "trajectory CSV (default: <run>/<command>.csv)");
  app->add_option("--manifest", o.manifest, "manifest path (default: next to the output)");
  app->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
}

struct WindowOptions
{
  double lambda = 0.65;
  int levels = 6;
  int align_levels = 3;
  int iters = 10;
  int window = 8;
  int keyframe_stride = 5;
  double p_pred = 0.9;
  int lost_after = 3;
  int acquisition = 40;
  std::string drop_classes;
};

void add_window_options(CLI::App* app, WindowOptions& w, bool with_drop = true)
{
  app->add_option("--lambda", w.lambda, "semantic vs odometry weight")->check(CLI::Range(0.0, 1.0));
  app->add_option("--levels", w.levels, "pyramid levels")->check(CLI::PositiveNumber);
  app->add_option("--align-levels", w.align_levels, "coarsest levels used for alignment")->check(CLI::PositiveNumber);
  app->add_option("--iters", w.iters, "Gauss-Newton iterations per level")->check(CLI::PositiveNumber);
  app->add_option("--window", w.window, "keyframes in the optimization window")->check(CLI::Range(2, 1000));
  app->add_option("--keyframe-stride", w.keyframe_stride, "every n-th frame is a keyframe")
      ->check(CLI::PositiveNumber);
  app->add_option("--p-pred", w.p_pred, "probability given to a frame's label when converting to logits")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--lost-after", w.lost_after, "consecutive non-converged keyframes that end tracking")
      ->check(CLI::PositiveNumber);
  app->add_option("--acquisition-keyframes", w.acquisition, "keyframes allowed before the first converged one")
      ->check(CLI::PositiveNumber);
  if (with_drop) app->add_option("--drop-classes", w.drop_classes, "comma separated classes removed from the map");
}

WindowConfig window_config(const WindowOptions& w, int threads)
{
  WindowConfig c;
  c.lambda = w.lambda;
  c.align.levels_total = w.levels;
  c.align.levels_used = w.align_levels;
  c.align.iters_per_level = w.iters;
  c.window_size = w.window;
  c.keyframe_stride = w.keyframe_stride;
  c.p_pred = w.p_pred;
  c.lost_after = w.lost_after;
  c.max_acquisition_keyframes = w.acquisition;
  c.threads = threads;
  return c;
}

json window_json(const WindowConfig& c)
{
  return {{"lambda", c.lambda},
          {"window_size", c.window_size},
          {"keyframe_stride", c.keyframe_stride},
          {"normalization", c.normalization == SemanticNormalization::raw ? "raw" : "per_pixel_mean"},
          {"odom_weight", vec_json(c.odom_weight)},
          {"lost_after", c.lost_after},
          {"max_acquisition_keyframes", c.max_acquisition_keyframes},
          {"p_pred", c.p_pred},
          {"threads", c.threads},
          {"align",
           {{"levels_total", c.align.levels_total},
            {"levels_used", c.align.levels_used},
            {"iters_per_level", c.align.iters_per_level},
            {"prob_floor", c.align.prob_floor},
            {"damping", c.align.damping},
            {"max_halvings", c.align.max_halvings},
            {"converged_step", c.align.converged_step},
            {"degeneracy_ratio", c.align.degeneracy_ratio},
            {"max_mean_cost", c.align.max_mean_cost},
            {"max_mean_cost_per_level", c.align.max_mean_cost_per_level}}}};
}

int report_lost(const TrackResult& r)
{
  if (!r.lost) return 0;
  std::cerr << "tracking lost: " << r.failure << " (partial trajectory of " << r.trajectory.size()
            << " frames written)\n";
  return kExitLost;
}

// ---------------------------------------------------------------- commands

struct GenerateOptions
{
  std::string preset = "urban-street";
  std::uint64_t seed = 7;
  std::string out;
  std::string manifest;
  int frames = 200;
  double speed = 10.0;
  double fps = 25.0;
  double flip = 0.0;
  int jitter = 0;
  double odom_trans = 0.0;
  double odom_rot_deg = 0.0;
  std::uint64_t noise_seed = 1;
};

int cmd_generate(const GenerateOptions& o, const std::vector<std::string>& args)
{
  ScenarioConfig sc;
  sc.preset = o.preset;
  sc.scene_seed = o.seed;
  sc.trajectory.frame_count = o.frames;
  sc.trajectory.speed = o.speed;
  sc.trajectory.frame_rate = o.fps;
  sc.noise.seg_flip_prob = o.flip;
  sc.noise.seg_boundary_jitter = o.jitter;
  const double r = deg2rad(o.odom_rot_deg);
  sc.noise.odom_sigma << o.odom_trans, o.odom_trans, o.odom_trans, r, r, r;
  sc.noise.seed = o.noise_seed;
  const Scenario s = make_scenario(sc);

  const RunDir dir{o.out};
  fs::create_directories(dir.frames());
  for (const auto& e : fs::directory_iterator(dir.frames()))
    if (e.path().extension() == ".pgm") fs::remove(e.path());
  io::write_smesh(dir.map(), s.map, s.classes);
  write_camera(dir.camera(), s.camera);
  for (std::size_t i = 0; i < s.frames.size(); ++i) io::write_pgm(dir.frames() / frame_name(static_cast<int>(i)), s.frames[i]);
  std::vector<io::PoseRecord> odo;
  for (std::size_t i = 0; i < s.odometry.size(); ++i) odo.push_back({static_cast<int>(i) + 1, s.odometry[i]});
  io::write_pose_csv(dir.odometry(), odo);
  io::write_pose_csv(dir.ground_truth(), to_records(s.ground_truth));

  json cfg = {{"preset", o.preset},
              {"seed", o.seed},
              {"frames", s.frames.size()},
              {"speed", o.speed},
              {"fps", o.fps},
              {"noise",
               {{"seg_flip_prob", o.flip},
                {"seg_boundary_jitter", o.jitter},
                {"odom_sigma", vec_json(sc.noise.odom_sigma)},
                {"seed", o.noise_seed}}},
              {"camera", {s.camera.fx, s.camera.fy, s.camera.cx, s.camera.cy, s.camera.width, s.camera.height}},
              {"triangles", s.map.triangles.size()}};
  const fs::path manifest = o.manifest.empty() ? dir.root / "manifest.json" : fs::path(o.manifest);
  write_manifest(manifest, "generate", args, cfg, json::object(),
                 {{"map", dir.map()}, {"camera", dir.camera()}, {"frames", dir.frames()},
                  {"odometry", dir.odometry()}, {"ground_truth", dir.ground_truth()}});
  std::cout << "wrote " << s.frames.size() << " frames, " << s.map.triangles.size() << " triangles to "
            << dir.root.string() << '\n';
  return 0;
}

int cmd_localize(const TrackOptions& t, const WindowOptions& w, const std::vector<std::string>& args)
{
  const RunDir dir{t.run};
  LoadedRun run = load_run(dir);
  const WindowConfig wc = window_config(w, t.threads);
  json cfg = window_json(wc);
  const Pose init = initial_pose(t, run, cfg);
  SemanticMesh map = run.map;
  if (!w.drop_classes.empty()) {
    map = drop_classes(run.map, run.classes, parse_class_list(w.drop_classes, run.classes));
    cfg["drop_classes"] = w.drop_classes;
  }
  const TrackResult r = run_localizer(map, run.classes, run.camera, run.frames, run.odometry, init, wc);
  const fs::path out = t.out.empty() ? dir.root / "localize.csv" : fs::path(t.out);
  io::write_pose_csv(out, r.trajectory);
  cfg["lost"] = r.lost;
  write_manifest(t.manifest.empty() ? default_manifest(out) : fs::path(t.manifest), "localize", args, cfg,
                 {{"run", dir.root}}, {{"trajectory", out}});
  std::cout << "localized " << r.trajectory.size() << " frames in " << std::fixed << std::setprecision(2)
            << r.seconds << " s -> " << out.string() << '\n';
  return report_lost(r);
}

struct PfOptions
{
  int particles = 500;
  double best_fraction = 0.10;
  std::uint64_t seed = 1;
  int keyframe_stride = 5;
  double exponent = 10.0;
};

int cmd_pf(const TrackOptions& t, const PfOptions& p, const std::vector<std::string>& args)
{
  const RunDir dir{t.run};
  LoadedRun run = load_run(dir);
  PfConfig pc;
  pc.particle_count = p.particles;
  pc.best_fraction = p.best_fraction;
  pc.seed = p.seed;
  pc.keyframe_stride = p.keyframe_stride;
  pc.score_exponent = p.exponent;
  pc.threads = t.threads;
  pc.validate();
  json cfg = {{"particle_count", pc.particle_count},
              {"best_fraction", pc.best_fraction},
              {"process_sigma", vec_json(pc.process_sigma)},
              {"init_sigma", vec_json(pc.init_sigma)},
              {"score_downscale", pc.score_downscale},
              {"score_exponent", pc.score_exponent},
              {"keyframe_stride", pc.keyframe_stride},
              {"seed", pc.seed},
              {"threads", pc.threads}};
  const Pose init = initial_pose(t, run, cfg);
  const TrackResult r = run_particle_filter(run.map, run.camera, run.frames, run.odometry, init, pc);
  const fs::path out = t.out.empty() ? dir.root / "pf.csv" : fs::path(t.out);
  io::write_pose_csv(out, r.trajectory);
  write_manifest(t.manifest.empty() ? default_manifest(out) : fs::path(t.manifest), "pf", args, cfg,
                 {{"run", dir.root}}, {{"trajectory", out}});
  std::cout << "pf tracked " << r.trajectory.size() << " frames in " << std::fixed << std::setprecision(2)
            << r.seconds << " s -> " << out.string() << '\n';
  return 0;
}

struct EvalOptions
{
  std::string gt;
  std::string est;
  std::string out_prefix;
  std::string manifest;
  double grid_trans = 0.01;
  double grid_rot = 0.05;
};

void print_summary(const std::string& label, const Summary& s, double scale, const std::string& unit)
{
  std::cout << std::fixed << std::setprecision(3) << label << ": median " << s.median * scale << ' ' << unit
            << "  mean " << s.mean * scale << ' ' << unit << "  p90 " << s.p90 * scale << ' ' << unit << "  max "
            << s.max * scale << ' ' << unit << "  (n=" << s.count << ")\n";
}

int cmd_eval(const EvalOptions& o, const std::vector<std::string>& args)
{
  const auto gt = io::read_pose_csv(fs::path(o.gt));
  const auto est = io::read_pose_csv(fs::path(o.est));
  const auto errs = trajectory_errors(gt, est);
  if (errs.empty()) throw EmptyInput("estimate has no frames");
  const auto te = translational(errs), re = rotational(errs);

  const fs::path prefix = o.out_prefix.empty() ? fs::path(o.est).replace_extension("") : fs::path(o.out_prefix);
  const fs::path errors_csv = prefix.string() + "_errors.csv";
  const fs::path cdf_t = prefix.string() + "_cdf_trans.csv";
  const fs::path cdf_r = prefix.string() + "_cdf_rot.csv";
  {
    auto f = io::open_out(errors_csv);
    write_errors_csv(f, errs);
  }
  {
    auto f = io::open_out(cdf_t);
    write_cdf_csv(f, cumulative_distribution(te, o.grid_trans));
  }
  {
    auto f = io::open_out(cdf_r);
    write_cdf_csv(f, cumulative_distribution(re, o.grid_rot));
  }
  print_summary("translation", summarize(te), 100.0, "cm");
  print_summary("rotation   ", summarize(re), 1.0, "deg");
  const fs::path manifest = o.manifest.empty() ? fs::path(prefix.string() + "_eval.manifest.json") : fs::path(o.manifest);
  write_manifest(manifest, "eval", args, {{"grid_trans", o.grid_trans}, {"grid_rot", o.grid_rot}},
                 {{"ground_truth", o.gt}, {"estimate", o.est}},
                 {{"errors", errors_csv}, {"cdf_trans", cdf_t}, {"cdf_rot", cdf_r}});
  return 0;
}

struct AblateOptions
{
  std::vector<std::string> sets{"none"};
};

int cmd_ablate(const TrackOptions& t, const WindowOptions& w, const AblateOptions& a,
               const std::vector<std::string>& args)
{
  const RunDir dir{t.run};
  LoadedRun run = load_run(dir);
  if (run.ground_truth.empty()) throw InvalidArgument("ablation needs ground_truth.csv in the run directory");
  const WindowConfig wc = window_config(w, t.threads);
  json cfg = window_json(wc);
  const Pose init = initial_pose(t, run, cfg);
  const fs::path out = t.out.empty() ? dir.root / "ablation.csv" : fs::path(t.out);
  auto f = io::open_out(out);
  f << "dropped,frames,lost,median_trans_m,median_rot_deg,mean_trans_m\n";
  std::cout << std::left << std::setw(28) << "dropped" << std::setw(8) << "lost" << std::setw(16) << "median [cm]"
            << "median [deg]\n";
  json rows = json::array();
  for (const auto& set : a.sets) {
    const std::string spec = set == "none" ? "" : set;
    const SemanticMesh map = drop_classes(run.map, run.classes, parse_class_list(spec, run.classes));
    const TrackResult r = run_localizer(map, run.classes, run.camera, run.frames, run.odometry, init, wc);
    double med_t = std::numeric_limits<double>::quiet_NaN(), med_r = med_t, mean_t = med_t;
    if (!r.trajectory.empty()) {
      const auto errs = trajectory_errors(run.ground_truth, r.trajectory);
      const auto st = summarize(translational(errs));
      med_t = st.median;
      mean_t = st.mean;
      med_r = summarize(rotational(errs)).median;
    }
    f << '"' << set << "\"," << r.trajectory.size() << ',' << (r.lost ? 1 : 0) << ',' << std::setprecision(9)
      << med_t << ',' << med_r << ',' << mean_t << '\n';
    std::cout << std::left << std::setw(28) << set << std::setw(8) << (r.lost ? "yes" : "no") << std::setw(16)
              << std::fixed << std::setprecision(2) << med_t * 100.0 << std::setprecision(3) << med_r << '\n';
    rows.push_back({{"dropped", set}, {"lost", r.lost}, {"median_trans_m", med_t}, {"median_rot_deg", med_r}});
  }
  cfg["sets"] = a.sets;
  write_manifest(t.manifest.empty() ? default_manifest(out) : fs::path(t.manifest), "ablate", args, cfg,
                 {{"run", dir.root}}, {{"table", out}, {"rows", rows}});
  return 0;
}

// Re-runs the command recorded in a manifest, optionally redirecting
// its outputs.
std::vector<std::string> replay_args(const std::string& manifest, const std::string& out, const std::string& new_manifest)
{
  std::ifstream f(manifest);
  if (!f) throw ParseError("cannot open " + manifest);
  json m;
  try {
    f >> m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!m.contains("args") || !m["args"].is_array()) throw ParseError("manifest has no args");
  std::vector<std::string> args;
  const auto stored = m["args"].get<std::vector<std::string>>();
  const bool generate = !stored.empty() && stored.front() == "generate";
  auto strip = [&](const std::string& a, const std::string& name) { return a == name || a.rfind(name + "=", 0) == 0; };
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const std::string& a = stored[i];
    const bool drop_out = !out.empty() && strip(a, "--out");
    const bool drop_manifest = strip(a, "--manifest");
    if (drop_out || drop_manifest) {
      if (a.find('=') == std::string::npos) ++i;
      continue;
    }
    args.push_back(a);
  }
  if (!out.empty()) {
    args.push_back("--out");
    args.push_back(out);
  }
  if (!new_manifest.empty()) {
    args.push_back("--manifest");
    args.push_back(new_manifest);
  } else if (!generate && out.empty()) {
    // keep the replay from overwriting the manifest it reads
    args.push_back("--manifest");
    args.push_back(manifest + ".replay.json");
  }
  return args;
}

int run(std::vector<std::string> args);

int dispatch(CLI::App& app, const std::vector<std::string>& args)
{
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  return -1;
}

int run(std::vector<std::string> args)
{
  CLI::App app{"Semantic map localization toolkit"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "write a synthetic run: map, frames, odometry, ground truth");
  g->add_option("--preset", gen.preset, "scene preset")->check(CLI::IsMember(preset_names()));
  g->add_option("--seed", gen.seed, "scene seed");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--manifest", gen.manifest, "manifest path (default: <out>/manifest.json)");
  g->add_option("--frames", gen.frames, "frame count")->check(CLI::PositiveNumber);
  g->add_option("--speed", gen.speed, "vehicle speed [m/s]")->check(CLI::PositiveNumber);
  g->add_option("--fps", gen.fps, "frame rate [Hz]")->check(CLI::PositiveNumber);
  g->add_option("--noise-flip", gen.flip, "per-pixel label flip probability")->check(CLI::Range(0.0, 1.0));
  g->add_option("--noise-jitter", gen.jitter, "label boundary jitter [px]")->check(CLI::NonNegativeNumber);
  g->add_option("--odom-sigma-trans", gen.odom_trans, "odometry noise per step and axis [m]")
      ->check(CLI::NonNegativeNumber);
  g->add_option("--odom-sigma-rot", gen.odom_rot_deg, "odometry noise per step and axis [deg]")
      ->check(CLI::NonNegativeNumber);
  g->add_option("--noise-seed", gen.noise_seed, "noise seed");

  TrackOptions loc_t;
  WindowOptions loc_w;
  auto* l = app.add_subcommand("localize", "track a run with the windowed semantic alignment");
  add_track_options(l, loc_t);
  add_window_options(l, loc_w);

  TrackOptions pf_t;
  PfOptions pf_o;
  auto* p = app.add_subcommand("pf", "track a run with the particle filter baseline");
  add_track_options(p, pf_t);
  p->add_option("--particles", pf_o.particles, "particle count")->check(CLI::PositiveNumber);
  p->add_option("--best-fraction", pf_o.best_fraction, "fraction of best particles averaged")
      ->check(CLI::Range(1e-9, 1.0));
  p->add_option("--seed", pf_o.seed, "filter seed");
  p->add_option("--keyframe-stride", pf_o.keyframe_stride, "score every n-th frame")->check(CLI::PositiveNumber);
  p->add_option("--score-exponent", pf_o.exponent, "weight update w *= score^k")->check(CLI::PositiveNumber);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "per-frame errors, CDFs and summary of an estimate");
  e->add_option("--gt", ev.gt, "ground-truth trajectory CSV")->required();
  e->add_option("--est", ev.est, "estimated trajectory CSV")->required();
  e->add_option("--out-prefix", ev.out_prefix, "prefix for the output CSVs (default: estimate path)");
  e->add_option("--manifest", ev.manifest, "manifest path");
  e->add_option("--grid-trans", ev.grid_trans, "CDF grid step [m]")->check(CLI::PositiveNumber);
  e->add_option("--grid-rot", ev.grid_rot, "CDF grid step [deg]")->check(CLI::PositiveNumber);

  TrackOptions ab_t;
  WindowOptions ab_w;
  AblateOptions ab;
  auto* a = app.add_subcommand("ablate", "localize once per class-dropout set and tabulate the errors");
  add_track_options(a, ab_t);
  add_window_options(a, ab_w, false);
  a->add_option("--drop", ab.sets, "dropout sets, e.g. none building building,nature")->expected(1, -1);

  std::string replay_manifest, replay_out, replay_manifest_out;
  auto* r = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  r->add_option("manifest", replay_manifest, "manifest JSON")->required();
  r->add_option("--out", replay_out, "redirect the trajectory or run directory");
  r->add_option("--manifest-out", replay_manifest_out, "where the replay writes its manifest");

  if (const int code = dispatch(app, args); code >= 0) return code;

  try {
    if (*g) return cmd_generate(gen, args);
    if (*l) return cmd_localize(loc_t, loc_w, args);
    if (*p) return cmd_pf(pf_t, pf_o, args);
    if (*e) return cmd_eval(ev, args);
    if (*a) return cmd_ablate(ab_t, ab_w, ab, args);
    if (*r) return run(replay_args(replay_manifest, replay_out, replay_manifest_out));
  } catch (const LostTracking& ex) {
    std::cerr << ex.what() << '\n';
    return kExitLost;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv)
{
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const std::exception& ex) {
    std::cerr << "internal error: " << ex.what() << '\n';
    return 1;
  }
}
