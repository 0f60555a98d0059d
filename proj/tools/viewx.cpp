#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "viewx/commands.hpp"

namespace {

int run_guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const viewx::Error& e) {
    std::cerr << "viewx: " << e.what() << "\n";
    return viewx::exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "viewx: I/O error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "viewx: " << e.what() << "\n";
    return 2;
  }
}

double parse_threshold(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw viewx::Error(viewx::Errc::config, "bad threshold '" + s + "'");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = viewx::cli;
  CLI::App app{"viewx: guided video refinement and extrapolative view tools"};
  app.require_subcommand(1);

  // degree
  cli::DegreeOptions degree;
  std::string degree_target;
  std::size_t degree_index = 0;
  auto* deg = app.add_subcommand("degree", "extrapolation degree of a target view against training views");
  deg->add_option("--poses", degree.poses, "training poses (pose JSON or COLMAP text directory)")->required();
  auto* deg_target = deg->add_option("--target", degree_target, "target pose file (first pose is used)");
  auto* deg_index = deg->add_option("--target-index", degree_index, "use this view of --poses as the target");
  deg_target->excludes(deg_index);

  // split
  cli::SplitCmdOptions split;
  std::string split_threshold = "1";
  auto* spl = app.add_subcommand("split", "greedy extrapolative train/test split");
  spl->add_option("--poses", split.poses, "poses (pose JSON or COLMAP text directory)")->required();
  spl->add_option("--e-threshold", split_threshold, "minimum e for a test view ('inf' allowed)");
  spl->add_option("--max-test", split.max_test, "maximum number of test views");
  spl->add_option("--max-angle", split.max_angle_deg, "max angle (deg) to the mean training direction");
  spl->add_option("--out", split.out_json, "split JSON output");
  spl->add_option("--hist", split.out_csv, "histogram CSV output");
  spl->add_option("--bin-width", split.bin_width, "histogram bin width");

  // render-pc
  cli::RenderCmdOptions render;
  std::string render_target;
  auto* ren = app.add_subcommand("render-pc", "render an artifact-prone video from an image and depth map");
  ren->add_option("--image", render.image, "source image (PPM P6)")->required();
  ren->add_option("--depth", render.depth, "source depth (PFM)")->required();
  ren->add_option("--poses", render.poses, "pose JSON with intrinsics; poses[0] is the source view")->required();
  auto* ren_target = ren->add_option("--target", render_target, "target pose file (first pose)");
  ren->add_option("--frames", render.frames, "number of frames")->check(CLI::Range(2, 100000));
  ren->add_option("--radius", render.splat_radius, "splat radius in pixels")->check(CLI::NonNegativeNumber);
  ren->add_option("--out", render.out_dir, "output directory")->required();

  // refine
  cli::RefineCmdOptions refine;
  std::string refine_config, refine_prior, refine_bridge, refine_replay, refine_output;
  std::uint64_t refine_seed = 0;
  int refine_tg = 0, refine_rg = 0;
  auto* ref = app.add_subcommand("refine", "guided refinement of a frame+mask directory");
  ref->add_option("--input", refine.input, "directory of frame_%05d.ppm + mask_%05d.pgm");
  ref->add_option("--output", refine_output, "output directory");
  ref->add_option("--backend", refine.backend, "oracle:gaussian | oracle:mixture | bridge")
      ->check(CLI::IsMember({"oracle:gaussian", "oracle:mixture", "bridge"}));
  auto* ref_config = ref->add_option("--config", refine_config, "sampler config JSON");
  auto* ref_prior = ref->add_option("--prior", refine_prior, "oracle prior JSON");
  auto* ref_bridge = ref->add_option("--bridge", refine_bridge, "bridge host:port (default $VIEWX_BRIDGE_ADDR)");
  auto* ref_seed = ref->add_option("--seed", refine_seed, "random seed");
  auto* ref_tg = ref->add_option("--t-guide", refine_tg, "guided denoising steps");
  auto* ref_rg = ref->add_option("--r-guide", refine_rg, "guided resampling rounds");
  ref->add_flag("--dynamic", refine.dynamic, "dynamic-scene default (T_guide = 16)");
  ref->add_option("--timeout", refine.timeout_s, "bridge reply timeout in seconds");
  auto* ref_replay = ref->add_option("--replay", refine_replay, "re-run from a manifest.json");

  // demo-oracle
  std::uint64_t demo_seed = 0;
  std::vector<int> demo_steps{25, 50, 100};
  auto* demo = app.add_subcommand("demo-oracle", "Euler vs closed-form convergence table");
  demo->add_option("--seed", demo_seed, "random seed");
  demo->add_option("--steps", demo_steps, "step counts")->delimiter(',')->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*deg) {
    return run_guarded([&] {
      if (*deg_target) degree.target = degree_target;
      if (*deg_index) degree.target_index = degree_index;
      cli::cmd_degree(degree, std::cout);
    });
  }
  if (*spl) {
    return run_guarded([&] {
      split.e_threshold = parse_threshold(split_threshold);
      cli::cmd_split(split, std::cout);
    });
  }
  if (*ren) {
    return run_guarded([&] {
      if (*ren_target) render.target = render_target;
      cli::cmd_render_pc(render, std::cout);
    });
  }
  if (*ref) {
    return run_guarded([&] {
      std::optional<std::filesystem::path> out;
      if (!refine_output.empty()) out = refine_output;
      if (*ref_replay) {
        cli::cmd_refine_replay(refine_replay, out, std::cout);
        return;
      }
      if (refine.input.empty() || !out)
        throw viewx::Error(viewx::Errc::config, "--input and --output are required");
      refine.output = *out;
      if (*ref_config) refine.config = refine_config;
      if (*ref_prior) refine.prior = refine_prior;
      if (*ref_bridge) refine.bridge_addr = refine_bridge;
      if (*ref_seed) refine.seed = refine_seed;
      if (*ref_tg) refine.t_guide = refine_tg;
      if (*ref_rg) refine.r_guide = refine_rg;
      cli::cmd_refine(refine, std::cout);
    });
  }
  if (*demo) {
    return run_guarded([&] { cli::cmd_demo_oracle(demo_seed, demo_steps, std::cout); });
  }
  return 2;
}
