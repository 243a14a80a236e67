#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "stv/ablation.hpp"
#include "stv/error.hpp"
#include "stv/io.hpp"
#include "stv/metrics.hpp"
#include "stv/streaming.hpp"

namespace stv::cli {
namespace {

// Toy "pretrained" weights are fixed; --seed only drives sampling.
constexpr std::uint64_t kModelSeed = 2024;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig resolve_config(const std::string& flag) {
  if (!flag.empty()) return load_run_config(flag);
  if (auto env = config_path_from_env()) return load_run_config(*env);
  return RunConfig{};
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct GenerateArgs {
  std::string prompt, config, out;
  std::size_t frames = 0;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.config);
  if (a.frames < cfg.F || a.frames % cfg.F != 0) {
    throw UsageError("--frames must be a positive multiple of " + std::to_string(cfg.F) + " (at least " +
                     std::to_string(cfg.F) + "), got " + std::to_string(a.frames));
  }
  UNetConfig uc;
  uc.frames = cfg.F;
  StreamingModel model = make_streaming_model(uc, kModelSeed);
  model.schedule = make_schedule(cfg.T, cfg.beta0, cfg.betaT);
  model.guidance = {cfg.omega_text, cfg.omega_anchor};
  model.sampler = {cfg.ddim_steps, cfg.eta};
  if (model.cam) model.cam->config.cond_frames = cfg.F_cond;

  GenerationPlan plan;
  plan.total_frames = a.frames;
  plan.F = cfg.F;
  plan.F_cond = cfg.F_cond;
  plan.prompt = a.prompt;
  plan.seed = a.seed.value_or(cfg.seed);

  const auto t0 = std::chrono::steady_clock::now();
  const GenerationResult r = generate_video(plan, model);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_container(a.out, round_to_f32(r.video));
  out << "chunks: " << r.chunks << "\n" << "elapsed_s: " << format_value(secs) << "\n";
  return kOk;
}

struct EnhanceArgs {
  std::string in, out, mode = "randomized", config;
  std::optional<int> tprime, steps;
  std::optional<std::uint64_t> seed;
};

int cmd_enhance(const EnhanceArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.config);
  const Tensor video = read_container(a.in);
  if (video.rank() != 4) throw FormatError("enhance: expected an F x h x w x c video, got " + shape_str(video.dims()));
  RefineOptions opt;
  opt.t_prime = a.tprime.value_or(cfg.Tprime);
  opt.sampler = {a.steps.value_or(cfg.ddim_steps), cfg.eta};
  opt.F_enh = cfg.F_enh;
  opt.O = cfg.O;
  const Schedule s = make_schedule(cfg.T, cfg.beta0, cfg.betaT);
  VideoPriorConfig pc;
  pc.frames = cfg.F_enh;
  pc.height = video.dim(1);
  pc.width = video.dim(2);
  pc.channels = video.dim(3);
  const VideoPriorPredictor denoiser(pc, s);
  const ChunkPlan chunks = split_into_chunks(video.dim(0), cfg.F_enh, cfg.O);
  const Tensor refined = refine_video(video, parse_blend_mode(a.mode), denoiser, s, opt, RngStream(a.seed.value_or(cfg.seed)));
  write_container(a.out, round_to_f32(refined));
  out << "chunks: " << chunks.starts.size() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string in, metrics, embeddings, out, config;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.config);
  std::vector<std::string> names = a.metrics.empty() ? kDefaultMetrics : split_list(a.metrics);
  const bool wants_reid = std::find(names.begin(), names.end(), "reid") != names.end();
  if (wants_reid && a.embeddings.empty()) throw UsageError("metric reid requires --embeddings");
  for (const auto& n : names) {
    if (n != "reid" && std::find(kDefaultMetrics.begin(), kDefaultMetrics.end(), n) == kDefaultMetrics.end()) {
      throw UsageError("unknown metric '" + n + "'");
    }
  }
  const Tensor video = read_container(a.in);
  std::optional<Detections> dets;
  if (!a.embeddings.empty()) dets = read_detections(a.embeddings);
  MetricOptions mo;
  mo.flow = cfg.flow();
  mo.cuts = cfg.cuts();
  mo.occlusion_thresh = cfg.occlusion_thresh;
  mo.eps_div = cfg.mawe_eps;
  const MetricReport r = evaluate_metrics(video, names, mo, dets ? &*dets : nullptr);
  // Rows follow the requested order.
  const auto all = report_rows(r);
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& n : names) {
    for (const auto& row : all)
      if (row.first == n) rows.push_back(row);
  }
  write_text(a.out, metrics_csv(rows), out);
  return kOk;
}

struct XtArgs {
  std::string in, out;
  std::size_t row = 0;
};

int cmd_xtslice(const XtArgs& a) {
  const Tensor video = read_container(a.in);
  if (video.rank() != 4) throw FormatError("xtslice: expected an F x h x w x c video, got " + shape_str(video.dims()));
  if (a.row >= video.dim(1)) {
    throw UsageError("--row must be below the frame height " + std::to_string(video.dim(1)));
  }
  write_pgm(a.out, xt_slice(video, a.row));
  return kOk;
}

struct AblateArgs {
  std::size_t frames = 88, seeds = 8;
  std::string out, config;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.config);
  AblationOptions opt;
  opt.frames = a.frames;
  opt.seeds = a.seeds;
  opt.base_seed = cfg.seed;
  opt.refine.t_prime = cfg.Tprime;
  opt.refine.sampler = {cfg.ddim_steps, cfg.eta};
  opt.refine.F_enh = cfg.F_enh;
  opt.refine.O = cfg.O;
  opt.flow = cfg.flow();
  const auto rows = run_blending_ablation(opt);
  std::string csv = "mode,mean_flow_std\n";
  for (const auto& r : rows) csv += std::string(blend_mode_name(r.mode)) + "," + format_value(r.mean_flow_std) + "\n";
  write_text(a.out, csv, out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming long-video generation toolkit", "stv"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a latent video chunk by chunk");
  g->add_option("--prompt", gen.prompt, "Text prompt")->default_val("");
  g->add_option("--frames", gen.frames, "Number of frames (multiple of 16)")->required();
  g->add_option("--seed", gen.seed, "Sampling seed (default: config seed)");
  g->add_option("--config", gen.config, "key=value config file (default: $STV_CONFIG)");
  g->add_option("--out", gen.out, "Output container")->required();

  EnhanceArgs enh;
  auto* e = app.add_subcommand("enhance", "Refine a video chunk-wise with overlap blending");
  e->add_option("--in", enh.in, "Input container")->required();
  e->add_option("--out", enh.out, "Output container")->required();
  e->add_option("--mode", enh.mode, "naive, shared or randomized")
      ->check(CLI::IsMember({"naive", "shared", "randomized"}))
      ->default_val("randomized");
  e->add_option("--tprime", enh.tprime, "Forward-diffusion depth (default: config Tprime)");
  e->add_option("--steps", enh.steps, "DDIM steps (default: config ddim_steps)");
  e->add_option("--seed", enh.seed, "Seed (default: config seed)");
  e->add_option("--config", enh.config, "key=value config file (default: $STV_CONFIG)");

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Compute video metrics as CSV");
  v->add_option("--in", ev.in, "Input container")->required();
  v->add_option("--metrics", ev.metrics, "Comma-separated list (default: mawe,ofs,warp_error,scuts,flow_std)");
  v->add_option("--embeddings", ev.embeddings, "Per-frame detection embeddings (JSON) for reid");
  v->add_option("--out", ev.out, "Output CSV (default: stdout)");
  v->add_option("--config", ev.config, "key=value config file (default: $STV_CONFIG)");

  XtArgs xt;
  auto* x = app.add_subcommand("xtslice", "Write an X-T slice as PGM");
  x->add_option("--in", xt.in, "Input container")->required();
  x->add_option("--row", xt.row, "Frame row")->required();
  x->add_option("--out", xt.out, "Output PGM")->required();

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate-blending", "Compare overlap blending modes on a toy video");
  b->add_option("--frames", ab.frames, "Toy video length (>= 40)")->default_val(88)->check(CLI::Range(40, 1 << 20));
  b->add_option("--seeds", ab.seeds, "Number of seeds (>= 1)")->default_val(8)->check(CLI::Range(1, 1 << 20));
  b->add_option("--out", ab.out, "Output CSV (default: stdout)");
  b->add_option("--config", ab.config, "key=value config file (default: $STV_CONFIG)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*e) return cmd_enhance(enh, out);
    if (*v) return cmd_eval(ev, out);
    if (*x) return cmd_xtslice(xt);
    if (*b) return cmd_ablate(ab, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << "\n";
    return kFormat;
  } catch (const ShapeError& ex) {
    err << "error: " << ex.what() << "\n";
    return kFormat;
  } catch (const DomainError& ex) {
    err << "error: " << ex.what() << "\n";
    return kDomain;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return kUsage;
}

}  // namespace stv::cli
