// geoctx command-line entry point. Exit codes: 0 ok, 1 usage, 2 data/format,
// 3 numerical/degenerate.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoctx/attention_mask.hpp"
#include "geoctx/dataio.hpp"
#include "geoctx/engine.hpp"
#include "geoctx/error.hpp"
#include "geoctx/losses.hpp"
#include "geoctx/metrics.hpp"
#include "geoctx/sequencer.hpp"
#include "geoctx/simd/kernels.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace geoctx;

namespace {

constexpr int kReportVersion = 1;

bool verbose() {
  const char* v = std::getenv("GEOCTX_VERBOSE");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v == 0.0 ? 0.0 : v);
  return buf;
}

void print_rows(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w = 0;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  for (const auto& r : rows) std::cout << r.first << std::string(w - r.first.size() + 2, ' ') << r.second << '\n';
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " '" + s + "'");
  }
}

// ------------------------------------------------------------------ mask

struct MaskArgs {
  std::string mode = "gca";
  std::size_t n = 3, k = 64;
  std::uint64_t m = 500, t = 1000;
  bool render = false, json = false;
};

int cmd_mask_stats(const MaskArgs& a) {
  const auto mode = mask::parse_mask_mode(a.mode);
  if (!mode) throw ConfigError("unknown mask mode '" + a.mode + "' (full, causal, sliding, gca)");
  mask::MaskSpec spec{*mode, a.n, a.k};
  if (a.k == 0) throw ConfigError("window k must be at least 1");
  const std::uint64_t closed = mask::context_token_count(spec, a.t, a.m);
  const std::uint64_t enumerated = mask::enumerate_context_tokens(spec, static_cast<mask::FrameId>(a.t), a.m);
  const std::uint64_t growth = mask::per_frame_growth(*mode, a.m);
  const mask::GrowthRatio ratio = mask::growth_ratio(a.m);
  if (a.json) {
    json j{{"format_version", kReportVersion},
           {"mode", std::string(mask::to_string(*mode))},
           {"n", a.n}, {"k", a.k}, {"M", a.m}, {"T", a.t},
           {"closed_form", closed}, {"enumerated", enumerated}, {"match", closed == enumerated},
           {"per_frame_growth", growth},
           {"growth_ratio_causal_over_gca", {{"causal", ratio.causal}, {"gca", ratio.gca},
                                             {"numerator", ratio.numerator}, {"denominator", ratio.denominator},
                                             {"value", ratio.value}}}};
    std::cout << j.dump(2) << '\n';
  } else {
    print_rows({{"mode", std::string(mask::to_string(*mode))},
                {"closed_form", std::to_string(closed)},
                {"enumerated", std::to_string(enumerated)},
                {"match", closed == enumerated ? "yes" : "NO"},
                {"per_frame_growth", std::to_string(growth)},
                {"causal/gca growth", std::to_string(ratio.numerator) + "/" + std::to_string(ratio.denominator) +
                                          " = " + num(ratio.value, 6)}});
  }
  if (a.render) {
    if (a.t > 16) throw ConfigError("--render supports T <= 16");
    std::cout << mask::render(mask::build_sequence_mask(spec, static_cast<mask::FrameId>(a.t)),
                              static_cast<mask::FrameId>(a.t));
  }
  if (closed != enumerated) throw DegenerateError("closed form and enumeration disagree");
  return 0;
}

// ---------------------------------------------------------------- stream

struct StreamArgs {
  std::string scene, mode = "direct", keyframe = "every:1", out, rope_scope = "all";
  std::size_t window = 64, anchors = 3, vo_window = 40, vo_overlap = 8;
  std::size_t pairs = 2, width = 64, heads = 4, page_capacity = 64;
  std::uint32_t patch = 14;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  bool json = false;
};

int cmd_stream_run(const StreamArgs& a) {
  if (a.mode != "direct" && a.mode != "vo") throw ConfigError("--mode must be direct or vo");
  engine::EngineConfig cfg;
  cfg.pairs = a.pairs;
  cfg.width = a.width;
  cfg.heads = a.heads;
  cfg.patch = a.patch;
  cfg.anchors = a.anchors;
  cfg.window = a.window;
  cfg.keyframe = kv::KeyframePolicy::parse(a.keyframe);
  cfg.seed = a.seed;
  cfg.page_capacity = a.page_capacity;
  if (a.rope_scope == "all")
    cfg.rope_scope = engine::RopeScope::all;
  else if (a.rope_scope == "trajectory")
    cfg.rope_scope = engine::RopeScope::trajectory_only;
  else
    throw ConfigError("--rope-scope must be all or trajectory");
  cfg.validate();
  engine::VoOptions vo{a.vo_window, a.vo_overlap};
  if (a.mode == "vo") vo.validate();  // before any frame is read or processed

  io::SceneSequence scene = io::read_scene(a.scene);
  if (a.limit > 0 && scene.frames.size() > a.limit) scene.frames.resize(a.limit);
  if (scene.frames.empty()) throw ShapeError("scene has no frames");
  const std::vector<ImageRaster> images = scene.images();

  engine::Engine eng(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  engine::RunResult run = a.mode == "direct" ? engine::run_direct(eng, images, scene.intrinsics)
                                             : engine::run_vo(eng, images, vo, scene.intrinsics);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Trajectory traj;
  for (std::size_t i = 0; i < run.frames.size(); ++i)
    traj.push_back(scene.frames[static_cast<std::size_t>(run.frames[i].frame)].id, run.frames[i].pose);

  const fs::path out(a.out);
  fs::create_directories(out / "depth");
  io::write_trajectory(out / "trajectory.txt", traj);
  for (std::size_t i = 0; i < run.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06lld.dpf", static_cast<long long>(traj.ids[i]));
    io::write_raster(out / "depth" / name, run.frames[i].depth);
  }

  json frames = json::array();
  std::uint64_t gathered = 0, keyframes = 0;
  double latency = 0.0;
  for (std::size_t i = 0; i < run.frames.size(); ++i) {
    const auto& s = run.frames[i].stats;
    gathered += s.tokens_gathered;
    keyframes += s.keyframe ? 1 : 0;
    latency += s.latency_s;
    frames.push_back({{"frame", traj.ids[i]}, {"tokens_gathered", s.tokens_gathered},
                      {"live_tokens", s.live_tokens}, {"cache_bytes", s.cache_bytes},
                      {"keyframe", s.keyframe}, {"flow_px", s.flow_px}, {"latency_s", s.latency_s}});
  }
  // Live-token slope past the anchors and window, direct mode only.
  json slope = nullptr;
  const std::size_t warm = a.anchors + a.window;
  if (a.mode == "direct" && run.frames.size() > warm + 1) {
    const auto& first = run.frames[warm].stats;
    const auto& last = run.frames.back().stats;
    slope = static_cast<double>(last.live_tokens - first.live_tokens) /
            static_cast<double>(run.frames.size() - 1 - warm);
  }
  json report{{"format_version", kReportVersion},
              {"config", {{"mode", a.mode}, {"anchors", a.anchors}, {"window", a.window},
                          {"keyframe", cfg.keyframe.describe()}, {"vo_window", a.vo_window},
                          {"vo_overlap", a.vo_overlap}, {"pairs", a.pairs}, {"width", a.width},
                          {"heads", a.heads}, {"patch", a.patch}, {"page_capacity", a.page_capacity},
                          {"rope_scope", a.rope_scope}, {"seed", a.seed},
                          {"kernels", std::string(simd::active_kernels().name)}}},
              {"totals", {{"frames", run.frames.size()}, {"keyframes", keyframes},
                          {"tokens_gathered", gathered}, {"latency_s", latency}, {"wall_s", wall},
                          {"fps", wall > 0.0 ? static_cast<double>(run.frames.size()) / wall : 0.0},
                          {"final_live_tokens", run.frames.back().stats.live_tokens},
                          {"final_cache_bytes", run.frames.back().stats.cache_bytes},
                          {"live_token_slope", slope}}},
              {"frames", frames}};
  {
    std::ofstream jf(out / "report.json");
    jf << report.dump(2) << '\n';
  }
  std::vector<std::pair<std::string, std::string>> rows{
      {"frames", std::to_string(run.frames.size())},
      {"keyframes", std::to_string(keyframes)},
      {"tokens_gathered", std::to_string(gathered)},
      {"final_live_tokens", std::to_string(run.frames.back().stats.live_tokens)},
      {"final_cache_bytes", std::to_string(run.frames.back().stats.cache_bytes)},
      {"live_token_slope", slope.is_null() ? "n/a" : num(slope.get<double>(), 8)},
      {"latency_s", num(latency)},
      {"fps", num(wall > 0.0 ? static_cast<double>(run.frames.size()) / wall : 0.0)},
      {"kernels", std::string(simd::active_kernels().name)},
      {"trajectory", (out / "trajectory.txt").string()}};
  {
    std::ofstream tf(out / "report.txt");
    std::streambuf* old = std::cout.rdbuf(tf.rdbuf());
    print_rows(rows);
    std::cout.rdbuf(old);
  }
  if (a.json) {
    std::cout << report.dump(2) << '\n';
  } else {
    print_rows(rows);
    if (verbose())
      for (const auto& f : frames)
        std::cout << "frame " << f["frame"] << " gathered " << f["tokens_gathered"] << " live "
                  << f["live_tokens"] << " bytes " << f["cache_bytes"] << " key " << f["keyframe"] << '\n';
  }
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalTrajArgs {
  std::string pred, gt, metrics = "ate,rpe,auc3,auc30";
  std::size_t rpe_delta = 1;
  bool json = false;
};

int cmd_eval_traj(const EvalTrajArgs& a) {
  const Trajectory pred = io::read_trajectory(a.pred);
  const Trajectory gt = io::read_trajectory(a.gt);
  const auto matched = metrics::match_frames(pred, gt);
  if (matched.ids.empty()) throw NoOverlapError("prediction and ground truth share no frame ids");
  std::vector<std::tuple<std::string, double, std::string>> out;
  for (const std::string& m : split(a.metrics, ',')) {
    if (m == "ate") {
      out.emplace_back("ate", metrics::ate(pred, gt).rmse, "m");
    } else if (m == "rpe") {
      const auto r = metrics::rpe(pred, gt, a.rpe_delta);
      out.emplace_back("rpe_trans", r.trans_rmse, "m");
      out.emplace_back("rpe_rot", r.rot_rmse_deg, "deg");
    } else if (m.rfind("auc", 0) == 0) {
      const double tau = to_double(m.substr(3), "AUC threshold");
      out.emplace_back(m, metrics::pairwise_auc(pred, gt, tau), "%");
    } else {
      throw ConfigError("unknown metric '" + m + "' (ate, rpe, auc<deg>)");
    }
  }
  if (a.json) {
    json j{{"format_version", kReportVersion}, {"common_frames", matched.ids.size()}, {"rpe_delta", a.rpe_delta}};
    json ms = json::object();
    for (const auto& [n, v, u] : out) ms[n] = {{"value", v}, {"unit", u}};
    j["metrics"] = ms;
    std::cout << j.dump(2) << '\n';
  } else {
    for (const auto& [n, v, u] : out) std::cout << n << ' ' << num(v, 10) << ' ' << u << '\n';
  }
  return 0;
}

geom::PointCloud load_cloud(const std::string& path, std::uint32_t stride) {
  const fs::path p(path);
  if (fs::is_directory(p) || p.filename() == "manifest.txt") return io::scene_cloud(io::read_scene(p), stride);
  return io::read_cloud(p);
}

struct EvalReconArgs {
  std::string pred, gt, seed = "identity";
  double f1 = metrics::ReconConfig{}.f1_threshold;
  double voxel = metrics::ReconConfig{}.voxel;
  double icp_dist = 0.1;
  int icp_iters = 50;
  std::uint32_t stride = 1;
  bool json = false;
};

json scores_json(const metrics::ReconScores& s) {
  return {{"accuracy_m", s.accuracy}, {"completeness_m", s.completeness}, {"precision_pct", s.precision},
          {"recall_pct", s.recall}, {"f1_pct", s.f1}};
}

int cmd_eval_recon(const EvalReconArgs& a) {
  metrics::ReconConfig cfg;
  cfg.f1_threshold = a.f1;
  cfg.voxel = a.voxel;
  cfg.icp_max_corr = a.icp_dist;
  cfg.icp_max_iters = a.icp_iters;
  if (a.seed == "identity")
    cfg.seed = metrics::SeedMode::identity;
  else if (a.seed == "centroid")
    cfg.seed = metrics::SeedMode::centroid;
  else
    throw ConfigError("--seed-mode must be identity or centroid");
  cfg.validate();
  const auto pred = load_cloud(a.pred, a.stride);
  const auto gt = load_cloud(a.gt, a.stride);
  if (pred.empty()) throw ShapeError("predicted cloud is empty");
  if (gt.empty()) throw ShapeError("ground-truth cloud is empty");
  const auto r = metrics::recon_scores(pred, gt, cfg);
  if (a.json) {
    json j{{"format_version", kReportVersion},
           {"config", {{"f1_threshold", a.f1}, {"voxel", a.voxel}, {"icp_dist", a.icp_dist},
                       {"icp_iters", a.icp_iters}, {"seed_mode", a.seed}}},
           {"points", {{"pred", r.pred_points}, {"gt", r.gt_points}}},
           {"icp_iterations", r.icp_iterations},
           {"pre_icp", scores_json(r.pre_icp)},
           {"post_icp", scores_json(r.post_icp)}};
    std::cout << j.dump(2) << '\n';
  } else {
    const auto rows = [](const std::string& tag, const metrics::ReconScores& s) {
      std::cout << tag << "acc " << num(s.accuracy, 10) << " m\n"
                << tag << "comp " << num(s.completeness, 10) << " m\n"
                << tag << "precision " << num(s.precision, 10) << " %\n"
                << tag << "recall " << num(s.recall, 10) << " %\n"
                << tag << "f1 " << num(s.f1, 10) << " %\n";
    };
    rows("pre_icp_", r.pre_icp);
    rows("", r.post_icp);
    std::cout << "icp_iterations " << r.icp_iterations << '\n';
  }
  return 0;
}

struct EvalLossArgs {
  std::string pred, gt;
  double epsilon = 0.1, lambda = 1.0;
  bool json = false;
};

int cmd_eval_loss(const EvalLossArgs& a) {
  const auto m = metrics::match_frames(io::read_trajectory(a.pred), io::read_trajectory(a.gt));
  if (m.ids.empty()) throw NoOverlapError("prediction and ground truth share no frame ids");
  const double abs_l = loss::abs_pose_loss(std::span<const geom::Pose>(m.pred), std::span<const geom::Pose>(m.gt),
                                           a.epsilon);
  const double rel_l = loss::rel_pose_loss(m.pred, m.gt, a.lambda);
  if (a.json) {
    std::cout << json{{"format_version", kReportVersion}, {"frames", m.ids.size()}, {"abs_pose", abs_l},
                      {"rel_pose", rel_l}}.dump(2)
              << '\n';
  } else {
    std::cout << "abs_pose " << num(abs_l, 10) << "\nrel_pose " << num(rel_l, 10) << '\n';
  }
  return 0;
}

// ------------------------------------------------------------------- seq

void print_indices(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (auto i : v) (s += std::to_string(i)) += '\n';
  std::cout << s;
}

struct GridArgs {
  std::uint32_t h = 1, w = 1, loop = 0;
  std::size_t t = 1;
  std::uint64_t seed = 0;
};

int cmd_seq_grid(const GridArgs& a) {
  const auto walk = seq::grid_walk({a.h, a.w, a.loop}, a.t, a.seed);
  print_indices(walk.indices);
  if (verbose()) std::cerr << "fallback steps: " << walk.fallback_count() << '\n';
  return 0;
}

struct StreetArgs {
  std::string poses;
  double eps = 0.01, d_ext = 1.0, d_prox = 5.0, p_turn = 0.5;
  std::size_t t = 1;
  std::uint64_t seed = 0;
};

int cmd_seq_street(const StreetArgs& a) {
  const Trajectory traj = io::read_trajectory(a.poses);
  auto net = seq::detect_intersections(seq::identify_streets(traj.poses, a.eps), a.d_ext);
  const auto steps = seq::street_walk(net, a.t, {a.p_turn, a.d_prox}, a.seed);
  std::vector<std::uint64_t> ids;
  for (const auto& s : steps) ids.push_back(static_cast<std::uint64_t>(traj.ids[s.frame]));
  print_indices(ids);
  if (verbose()) std::cerr << net.streets.size() << " streets, " << net.edges.size() << " intersections\n";
  return 0;
}

struct FoldbackArgs {
  std::int64_t len = 2;
  std::string strides = "1:1";
  std::size_t t = 1;
  std::uint64_t seed = 0;
};

int cmd_seq_foldback(const FoldbackArgs& a) {
  const auto parts = split(a.strides, ':');
  if (parts.size() != 2) throw ConfigError("--strides must be a:b");
  const auto lo = static_cast<std::int64_t>(to_double(parts[0], "stride"));
  const auto hi = static_cast<std::int64_t>(to_double(parts[1], "stride"));
  const auto v = seq::foldback_sample(a.len, a.t, lo, hi, a.seed);
  std::vector<std::uint64_t> out(v.begin(), v.end());
  print_indices(out);
  return 0;
}

struct TraverseArgs {
  std::string waypoints, out;
  seq::TraversalParams p;
  double speed = 0.0;
};

int cmd_seq_traverse(TraverseArgs a) {
  if (a.speed > 0.0) a.p.speed = a.speed;
  const auto wp = io::read_cloud(a.waypoints);
  const Trajectory t = seq::traversal_trajectory(wp.points, a.p);
  if (a.out.empty())
    io::write_trajectory(std::cout, t);
  else
    io::write_trajectory(fs::path(a.out), t);
  return 0;
}

// ----------------------------------------------------------------- synth

struct SynthArgs {
  std::string dims = "4,4,4", traj, out;
  std::size_t frames = 60;
  std::uint32_t width = 64, height = 48;
  double focal = 0.0;
  std::uint64_t seed = 0;
  double rot_noise = 0.0, trans_noise = 0.0;
};

int cmd_synth_room(const SynthArgs& a) {
  const auto d = split(a.dims, ',');
  if (d.size() != 3) throw ConfigError("--dims must be x,y,z");
  io::BoxRoom room;
  room.dims = geom::Vec3(to_double(d[0], "dimension"), to_double(d[1], "dimension"), to_double(d[2], "dimension"));
  room.validate();
  geom::Intrinsics k = engine::default_intrinsics(a.width, a.height);
  if (a.focal > 0.0) k.fx = k.fy = a.focal;
  Trajectory traj = a.traj.empty() ? io::orbit_trajectory(room, a.frames, a.seed) : io::read_trajectory(a.traj);
  if (a.rot_noise > 0.0 || a.trans_noise > 0.0)
    traj = io::perturb_trajectory(traj, a.rot_noise, a.trans_noise, a.seed + 1);
  const io::SceneSequence scene = io::synth_room_scene(room, traj, k);
  io::write_scene(a.out, scene);
  io::write_trajectory(fs::path(a.out) / "groundtruth.txt", traj);
  std::cout << "wrote " << scene.frames.size() << " frames to " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoctx: streaming geometric-context toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "geoctx 1.0");
  std::function<int()> action;

  // mask stats
  auto* mask_cmd = app.add_subcommand("mask", "attention mask accounting");
  mask_cmd->require_subcommand(1);
  MaskArgs ma;
  auto* ms = mask_cmd->add_subcommand("stats", "closed-form and enumerated context token counts");
  ms->add_option("--mode", ma.mode, "full | causal | sliding | gca")->capture_default_str();
  ms->add_option("-n,--anchors", ma.n, "anchor frames")->capture_default_str();
  ms->add_option("-k,--window", ma.k, "window frames")->capture_default_str();
  ms->add_option("-M,--image-tokens", ma.m, "image tokens per frame")->capture_default_str();
  ms->add_option("-T,--frames", ma.t, "sequence length")->capture_default_str();
  ms->add_flag("--render", ma.render, "print the block pattern (T <= 16)");
  ms->add_flag("--json", ma.json, "machine-readable output");
  ms->callback([&] { action = [&] { return cmd_mask_stats(ma); }; });

  // stream run
  auto* stream_cmd = app.add_subcommand("stream", "streaming inference");
  stream_cmd->require_subcommand(1);
  StreamArgs sa;
  auto* sr = stream_cmd->add_subcommand("run", "run the toy engine over a scene");
  sr->add_option("scene", sa.scene, "scene directory or manifest")->required();
  sr->add_option("--mode", sa.mode, "direct | vo")->capture_default_str();
  sr->add_option("--window", sa.window, "window k")->capture_default_str();
  sr->add_option("--anchors", sa.anchors, "anchor frames n")->capture_default_str();
  sr->add_option("--vo-window", sa.vo_window, "frames per VO window")->capture_default_str();
  sr->add_option("--vo-overlap", sa.vo_overlap, "shared frames between VO windows")->capture_default_str();
  sr->add_option("--keyframe", sa.keyframe, "every:<m> | flow:<px>")->capture_default_str();
  sr->add_option("--seed", sa.seed, "weight seed")->capture_default_str();
  sr->add_option("--out", sa.out, "output directory")->required();
  sr->add_option("--pairs", sa.pairs, "layer pairs")->capture_default_str();
  sr->add_option("--width", sa.width, "model width")->capture_default_str();
  sr->add_option("--heads", sa.heads, "attention heads")->capture_default_str();
  sr->add_option("--patch", sa.patch, "patch size in pixels")->capture_default_str();
  sr->add_option("--page-capacity", sa.page_capacity, "tokens per cache page")->capture_default_str();
  sr->add_option("--rope-scope", sa.rope_scope, "all | trajectory")->capture_default_str();
  sr->add_option("--limit", sa.limit, "process at most this many frames (0 = all)");
  sr->add_flag("--json", sa.json, "print the JSON report");
  sr->callback([&] { action = [&] { return cmd_stream_run(sa); }; });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluation");
  eval_cmd->require_subcommand(1);
  EvalTrajArgs ta;
  auto* et = eval_cmd->add_subcommand("traj", "trajectory metrics");
  et->add_option("pred", ta.pred)->required();
  et->add_option("gt", ta.gt)->required();
  et->add_option("--metrics", ta.metrics, "comma list of ate, rpe, auc<deg>")->capture_default_str();
  et->add_option("--rpe-delta", ta.rpe_delta, "frame offset for RPE")->capture_default_str();
  et->add_flag("--json", ta.json);
  et->callback([&] { action = [&] { return cmd_eval_traj(ta); }; });

  EvalReconArgs ra;
  auto* er = eval_cmd->add_subcommand("recon", "reconstruction metrics");
  er->add_option("pred", ra.pred, "scene directory or xyz cloud")->required();
  er->add_option("gt", ra.gt, "scene directory or xyz cloud")->required();
  er->add_option("--f1", ra.f1, "F1 distance threshold in meters")->capture_default_str();
  er->add_option("--voxel", ra.voxel, "voxel size, <= 0 disables")->capture_default_str();
  er->add_option("--icp-dist", ra.icp_dist, "ICP correspondence distance")->capture_default_str();
  er->add_option("--icp-iters", ra.icp_iters, "ICP iteration budget")->capture_default_str();
  er->add_option("--seed-mode", ra.seed, "identity | centroid")->capture_default_str();
  er->add_option("--stride", ra.stride, "pixel stride when unprojecting scenes")->capture_default_str();
  er->add_flag("--json", ra.json);
  er->callback([&] { action = [&] { return cmd_eval_recon(ra); }; });

  EvalLossArgs la;
  auto* el = eval_cmd->add_subcommand("loss", "pose losses between trajectories");
  el->add_option("pred", la.pred)->required();
  el->add_option("gt", la.gt)->required();
  el->add_option("--epsilon", la.epsilon, "Huber threshold")->capture_default_str();
  el->add_option("--lambda", la.lambda, "translation weight")->capture_default_str();
  el->add_flag("--json", la.json);
  el->callback([&] { action = [&] { return cmd_eval_loss(la); }; });

  // seq
  auto* seq_cmd = app.add_subcommand("seq", "sequence samplers");
  seq_cmd->require_subcommand(1);
  GridArgs ga;
  auto* sg = seq_cmd->add_subcommand("grid", "aerial grid random walk");
  sg->add_option("-H,--rows", ga.h)->required();
  sg->add_option("-W,--cols", ga.w)->required();
  sg->add_option("-T,--length", ga.t)->required();
  sg->add_option("--loop", ga.loop, "grid loop index")->capture_default_str();
  sg->add_option("--seed", ga.seed)->capture_default_str();
  sg->callback([&] { action = [&] { return cmd_seq_grid(ga); }; });

  StreetArgs sta;
  auto* ss = seq_cmd->add_subcommand("street", "street network random walk");
  ss->add_option("poses", sta.poses, "viewpoint-first pose stream")->required();
  ss->add_option("-T,--length", sta.t)->required();
  ss->add_option("--eps", sta.eps)->capture_default_str();
  ss->add_option("--d-ext", sta.d_ext)->capture_default_str();
  ss->add_option("--d-prox", sta.d_prox)->capture_default_str();
  ss->add_option("--p-turn", sta.p_turn)->capture_default_str();
  ss->add_option("--seed", sta.seed)->capture_default_str();
  ss->callback([&] { action = [&] { return cmd_seq_street(sta); }; });

  FoldbackArgs fa;
  auto* sf = seq_cmd->add_subcommand("foldback", "foldback video sampler");
  sf->add_option("--len", fa.len, "sequence length N")->required();
  sf->add_option("--strides", fa.strides, "stride range a:b")->capture_default_str();
  sf->add_option("-T,--count", fa.t)->required();
  sf->add_option("--seed", fa.seed)->capture_default_str();
  sf->callback([&] { action = [&] { return cmd_seq_foldback(fa); }; });

  TraverseArgs tra;
  auto* sv = seq_cmd->add_subcommand("traverse", "waypoint traversal controller");
  sv->add_option("waypoints", tra.waypoints, "xyz waypoint file")->required();
  sv->add_option("--out", tra.out, "trajectory file (stdout when absent)");
  sv->add_option("--fps", tra.p.fps)->capture_default_str();
  sv->add_option("--alpha", tra.p.alpha)->capture_default_str();
  sv->add_option("--lookahead", tra.p.lookahead)->capture_default_str();
  sv->add_option("--speed", tra.speed, "fixed speed, overrides the range");
  sv->add_option("--speed-min", tra.p.speed_min)->capture_default_str();
  sv->add_option("--speed-max", tra.p.speed_max)->capture_default_str();
  sv->add_option("--yaw-rate", tra.p.yaw_rate_max)->capture_default_str();
  sv->add_option("--pitch-tau", tra.p.pitch_tau)->capture_default_str();
  sv->add_option("--jitter-pos", tra.p.jitter_pos)->capture_default_str();
  sv->add_option("--jitter-rot", tra.p.jitter_rot)->capture_default_str();
  sv->add_option("--glance-rate", tra.p.glance_rate)->capture_default_str();
  sv->add_option("--min-spacing", tra.p.min_spacing)->capture_default_str();
  sv->add_option("--seed", tra.p.seed)->capture_default_str();
  sv->callback([&] { action = [&] { return cmd_seq_traverse(tra); }; });

  // synth room
  auto* synth_cmd = app.add_subcommand("synth", "synthetic scenes");
  synth_cmd->require_subcommand(1);
  SynthArgs ya;
  auto* sy = synth_cmd->add_subcommand("room", "box room with analytic depth");
  sy->add_option("--dims", ya.dims, "x,y,z in meters")->capture_default_str();
  sy->add_option("--frames", ya.frames, "orbit length when no trajectory is given")->capture_default_str();
  sy->add_option("--traj", ya.traj, "camera trajectory file");
  sy->add_option("--width", ya.width)->capture_default_str();
  sy->add_option("--height", ya.height)->capture_default_str();
  sy->add_option("--focal", ya.focal, "focal length in pixels (default max(width, height))");
  sy->add_option("--seed", ya.seed)->capture_default_str();
  sy->add_option("--rot-noise", ya.rot_noise, "pose noise, degrees")->capture_default_str();
  sy->add_option("--trans-noise", ya.trans_noise, "pose noise, meters")->capture_default_str();
  sy->add_option("--out", ya.out, "scene directory")->required();
  sy->callback([&] { action = [&] { return cmd_synth_room(ya); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorCategory::usage);
  }

  try {
    return action ? action() : 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::usage);
  }
}
