#include "crossvae/cli.hpp"

#include "crossvae/checkpoint.hpp"
#include "crossvae/metrics.hpp"
#include "crossvae/render.hpp"
#include "crossvae/training.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace crossvae {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

bool is_png(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

// Numbered sibling paths when one output file has to hold several images.
std::string indexed_path(const std::string& path, std::size_t i, std::size_t n) {
  if (n == 1) return path;
  const std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + "_" + std::to_string(i) + p.extension().string()))
      .string();
}

struct SynthArgs {
  std::string out, test_out, classes = "A,B,C,D,E";
  int n_per_class = 40;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

int cmd_synth(const SynthArgs& a) {
  const auto classes = split_list(a.classes);
  if (classes.empty()) throw UsageError("--classes must name at least one class");
  auto samples = synth_samples(a.seed, a.n_per_class, classes);
  if (a.test_out.empty()) {
    write_stroke_file(a.out, samples);
    std::cout << "wrote " << samples.size() << " samples to " << a.out << "\n";
    return 0;
  }
  auto [train_set, test_set] = split_samples(samples, a.train_fraction, a.seed);
  write_stroke_file(a.out, train_set);
  write_stroke_file(a.test_out, test_set);
  std::cout << "wrote " << train_set.size() << " training samples to " << a.out << " and "
            << test_set.size() << " test samples to " << a.test_out << "\n";
  return 0;
}

int cmd_ingest(const std::string& input, const std::string& out) {
  const auto samples = read_stroke_file(input);
  std::vector<StrokeSample> clean;
  clean.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    validate(samples[i], "record " + std::to_string(i + 1));
    clean.push_back(normalize(samples[i]));
  }
  write_stroke_file(out, clean);
  std::cout << "ingested " << clean.size() << " samples into " << out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, resume, seq_encoder = "conv", image_unpool = "fixed";
  int epochs = 200, batch = 32, latent_dim = 32, seq_len = kDefaultSeqLen;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub) {
  Checkpoint state;
  if (!a.resume.empty()) {
    state = load_checkpoint(a.resume);
    for (const char* flag : {"--batch", "--latent-dim", "--seq-encoder", "--seed", "--seq-len", "--image-unpool"}) {
      if (sub.count(flag)) {
        throw UsageError(std::string(flag) + " cannot change when resuming; it comes from the checkpoint");
      }
    }
    state.train.epochs = a.epochs;
  } else {
    ModelConfig model;
    model.latent_dim = a.latent_dim;
    model.seq_len = a.seq_len;
    model.seq_encoder = parse_seq_encoder(a.seq_encoder);
    model.image_unpool = parse_image_unpool(a.image_unpool);
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    state = init_training(model, cfg);
  }
  const Dataset data = build_dataset(read_stroke_file(a.data), state.model.seq_len);
  if (data.empty()) throw std::runtime_error(a.data + ": no training samples");
  continue_training(state, data, a.epochs, [](const EpochStats& s, const Checkpoint&) {
    std::cout << "epoch " << s.epoch << " loss " << s.loss.total << " latent_gap "
              << s.mean_latent_gap << "\n";
  });
  save_checkpoint(a.out, state);
  std::cout << "saved checkpoint at epoch " << state.epoch << " to " << a.out << "\n";
  return 0;
}

struct Loaded {
  CrossVae<float> model;
  Checkpoint ckpt;
};

Loaded load_model(const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  CrossVae<float> m(c.model);
  return {std::move(m), std::move(c)};
}

struct ConvertArgs {
  std::string model, input, direction, out;
};

int cmd_convert(const ConvertArgs& a) {
  const auto [model, ckpt] = load_model(a.model);
  const auto& p = ckpt.params;
  const bool from_image = a.direction == "b2t" || a.direction == "b2b";
  const bool to_image = a.direction == "t2b" || a.direction == "b2b";

  // Inputs as (label, item). A PNG is only meaningful as an image input.
  std::vector<DatasetItem> items;
  if (is_png(a.input)) {
    if (!from_image) throw UsageError("direction " + a.direction + " needs a stroke file input");
    items.push_back({std::filesystem::path(a.input).stem().string(), {}, read_bitmap_png(a.input)});
  } else {
    items = build_dataset(read_stroke_file(a.input), ckpt.model.seq_len).items;
  }
  if (items.empty()) throw std::runtime_error(a.input + ": no samples");

  std::vector<StrokeSample> trajectories;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    Tensor<float> y;
    if (from_image) {
      const auto x = to_tensor<float>(it.bitmap);
      y = a.direction == "b2t" ? model.convert_b2t(x, p) : model.convert_b2b(x, p);
    } else {
      const auto x = to_tensor<float>(it.trajectory);
      y = a.direction == "t2b" ? model.convert_t2b(x, p) : model.convert_t2t(x, p);
    }
    if (to_image) {
      write_png(indexed_path(a.out, i, items.size()), to_bitmap(y));
    } else {
      trajectories.push_back(to_sample(it.label, to_trajectory(y)));
    }
  }
  if (!to_image) write_stroke_file(a.out, trajectories);
  std::cout << "converted " << items.size() << " inputs (" << a.direction << ") to " << a.out
            << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data, const std::string& out) {
  const auto [model, ckpt] = load_model(model_path);
  const Dataset test = build_dataset(read_stroke_file(data), ckpt.model.seq_len);
  const std::string report = evaluate(model, ckpt.params, test).to_json();
  std::cout << report;
  if (!out.empty()) write_text(out, report);
  return 0;
}

struct RenderArgs {
  std::string input, model, out;
  int size = 256, thickness = 3, max_items = 8;
};

int cmd_render(const RenderArgs& a) {
  RenderSpec spec;
  spec.size = a.size;
  spec.thickness = a.thickness;
  spec.validate();
  if (a.model.empty()) {
    const auto samples = read_stroke_file(a.input);
    if (samples.empty()) throw std::runtime_error(a.input + ": no samples");
    const int n = std::min<int>(static_cast<int>(samples.size()), a.max_items);
    for (int i = 0; i < n; ++i) {
      const auto traj = resample(normalize(samples[i]), kDefaultSeqLen);
      write_png(indexed_path(a.out, i, n), render_trajectory(traj, spec));
    }
    std::cout << "rendered " << n << " trajectories to " << a.out << "\n";
    return 0;
  }
  const auto [model, ckpt] = load_model(a.model);
  const auto& p = ckpt.params;
  const Dataset data = build_dataset(read_stroke_file(a.input), ckpt.model.seq_len);
  std::vector<GridRow> rows;
  for (const auto& it : data.items) {
    if (static_cast<int>(rows.size()) >= a.max_items) break;
    const auto x_t = to_tensor<float>(it.trajectory);
    const auto x_b = to_tensor<float>(it.bitmap);
    rows.push_back({it.bitmap, to_bitmap(model.convert_b2b(x_b, p)),
                    to_bitmap(model.convert_t2b(x_t, p)), it.trajectory,
                    to_trajectory(model.convert_t2t(x_t, p)),
                    to_trajectory(model.convert_b2t(x_b, p))});
  }
  write_png(a.out, figure_grid(rows, {}, spec));
  std::cout << "rendered a " << rows.size() << "-row conversion grid to " << a.out << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Cross-VAE handwriting converter: inking and stroke recovery"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic stroke dataset");
  s->add_option("--out", synth.out, "Stroke file to write (training part if --test-out is set)")->required();
  s->add_option("--n-per-class", synth.n_per_class, "Samples per class")->check(CLI::PositiveNumber);
  s->add_option("--classes", synth.classes, "Comma-separated uppercase letters");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--test-out", synth.test_out, "Also split off a held-out test file");
  s->add_option("--train-fraction", synth.train_fraction, "Per-class training share")
      ->check(CLI::Range(0.0, 1.0));

  std::string ingest_in, ingest_out;
  auto* in = app.add_subcommand("ingest", "Validate and normalize a stroke file");
  in->add_option("--input", ingest_in)->required();
  in->add_option("--out", ingest_out)->required();

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a model on a stroke file");
  tr->add_option("--data", train_args.data)->required();
  tr->add_option("--out", train_args.out, "Checkpoint to write")->required();
  tr->add_option("--epochs", train_args.epochs, "Train until this epoch")->check(CLI::PositiveNumber);
  tr->add_option("--batch", train_args.batch)->check(CLI::PositiveNumber);
  tr->add_option("--latent-dim", train_args.latent_dim)->check(CLI::PositiveNumber);
  tr->add_option("--seq-encoder", train_args.seq_encoder)->check(CLI::IsMember({"conv", "lstm"}));
  tr->add_option("--seq-len", train_args.seq_len)->check(CLI::Range(2, 100000));
  tr->add_option("--image-unpool", train_args.image_unpool,
                 "Image decoder unpool placement during training")
      ->check(CLI::IsMember({"fixed", "recorded"}));
  tr->add_option("--seed", train_args.seed);
  tr->add_option("--resume", train_args.resume, "Continue from this checkpoint");

  ConvertArgs conv;
  auto* cv = app.add_subcommand("convert", "Convert between trajectories and bitmaps");
  cv->add_option("--model", conv.model)->required();
  cv->add_option("--input", conv.input, "Stroke file, or a 32x32 PNG for b2t/b2b")->required();
  cv->add_option("--direction", conv.direction)
      ->required()
      ->check(CLI::IsMember({"t2b", "b2t", "t2t", "b2b"}));
  cv->add_option("--out", conv.out, "Stroke file for t2t/b2t, PNG for t2b/b2b")->required();

  std::string eval_model, eval_data, eval_out;
  auto* ev = app.add_subcommand("eval", "Score inking and stroke recovery on a test set");
  ev->add_option("--model", eval_model)->required();
  ev->add_option("--data", eval_data)->required();
  ev->add_option("--out", eval_out, "Also write the JSON report here");

  RenderArgs ren;
  auto* rd = app.add_subcommand("render", "Render trajectories, or a conversion grid with --model");
  rd->add_option("--input", ren.input)->required();
  rd->add_option("--model", ren.model);
  rd->add_option("--out", ren.out)->required();
  rd->add_option("--size", ren.size, "Trajectory image size in pixels")->check(CLI::Range(32, 4096));
  rd->add_option("--thickness", ren.thickness)->check(CLI::Range(1, 64));
  rd->add_option("--max-items", ren.max_items)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*in) return cmd_ingest(ingest_in, ingest_out);
    if (*tr) return cmd_train(train_args, *tr);
    if (*cv) return cmd_convert(conv);
    if (*ev) return cmd_eval(eval_model, eval_data, eval_out);
    if (*rd) return cmd_render(ren);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace crossvae
