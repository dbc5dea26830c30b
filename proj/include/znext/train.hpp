#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "znext/augment.hpp"
#include "znext/dataset.hpp"
#include "znext/losses.hpp"
#include "znext/model.hpp"
#include "znext/optim.hpp"

namespace znext {

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 8;  // clips when clip_len > 1
  double lr = 1e-4;
  double decay_factor = 0.5;
  std::size_t decay_every = 0;  // epochs; 0 -> ceil(epochs / 3)
  std::size_t input_side = 64;
  bool augment = true;
  std::uint64_t seed = 0;
  LossConfig loss;
  AdamOptions adam;

  std::size_t decay_period() const { return decay_every ? decay_every : std::max<std::size_t>(1, (epochs + 2) / 3); }

  double lr_at_epoch(std::size_t epoch) const {
    return lr * std::pow(decay_factor, static_cast<double>(epoch / decay_period()));
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0;
  double lambda = 0;
  double lr = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_loss;
};

inline void write_train_log(std::ostream& os, const TrainLog& log) {
  os.precision(10);
  os << "epoch,loss,lambda,lr\n";
  for (const auto& r : log.epochs) os << r.epoch << ',' << r.loss << ',' << r.lambda << ',' << r.lr << '\n';
}

/// Bilinear resize of an image; masks are re-binarized at 0.5.
inline Image resize_image(const Image& img, std::size_t h, std::size_t w, bool binary = false) {
  if (img.height == h && img.width == w) return img;
  NoGradGuard ng;
  Image out = from_tensor(bilinear_resize(to_tensor<double>(img), h, w));
  if (binary)
    for (auto& v : out.data) v = v >= 0.5 ? 1.0 : 0.0;
  return out;
}

/// A training unit: `len` consecutive frames of one sample.
struct FrameWindow {
  std::size_t sample = 0, start = 0, len = 1;
};

/// Image mode uses every frame; clip mode tiles each sample with
/// non-overlapping windows of clip_len frames (a shorter tail is dropped).
inline std::vector<FrameWindow> make_windows(const Dataset& ds, std::size_t clip_len) {
  std::vector<FrameWindow> w;
  for (std::size_t s = 0; s < ds.size(); ++s)
    for (std::size_t t = 0; t + clip_len <= ds[s].frames.size(); t += clip_len) w.push_back({s, t, clip_len});
  return w;
}

/// Stacks windows into frames [B*T,3,S,S] and masks [B*T,1,S,S].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const Dataset& ds, const std::vector<FrameWindow>& windows,
                                           std::size_t side, Rng* aug_rng, const AugmentOptions& aopt = {}) {
  std::vector<Image> imgs, masks;
  for (const auto& w : windows) {
    AugmentDraw d;
    if (aug_rng) d = draw_augment(*aug_rng, aopt);
    for (std::size_t t = w.start; t < w.start + w.len; ++t) {
      Image im = resize_image(ds[w.sample].frames[t], side, side);
      Image mk = resize_image(ds[w.sample].masks[t], side, side, true);
      if (aug_rng) {
        im = augment_image(im, d);
        mk = augment_mask(mk, d);
      }
      imgs.push_back(std::move(im));
      masks.push_back(std::move(mk));
    }
  }
  std::vector<const Image*> ip, mp;
  for (auto& i : imgs) ip.push_back(&i);
  for (auto& m : masks) mp.push_back(&m);
  return {to_tensor<T>(ip), to_tensor<T>(mp)};
}

/// Trains `model` from a fresh initialization seeded by cfg.seed.
template <typename T>
TrainLog train(Model<T>& model, const Dataset& ds, const TrainConfig& cfg, std::ostream* progress = nullptr) {
  if (ds.empty()) throw DataError("train: empty dataset");
  cfg.loss.validate();
  const std::size_t T_ = model.config().clip_len;
  if (cfg.input_side % 4 != 0 || cfg.input_side < model.min_side())
    throw ShapeError("train: input side " + std::to_string(cfg.input_side) + " must be divisible by 4 and >= " +
                     std::to_string(model.min_side()));
  auto windows = make_windows(ds, T_);
  if (windows.empty()) throw DataError("train: no sample has " + std::to_string(T_) + " frames");
  const std::size_t B = std::max<std::size_t>(1, std::min(cfg.batch_size, windows.size()));
  const std::size_t steps_per_epoch = (windows.size() + B - 1) / B;
  const double total_steps = static_cast<double>(cfg.epochs * steps_per_epoch);

  model.init(cfg.seed);
  Rng order_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull), aug_rng(cfg.seed ^ 0xD1B54A32D192ED03ull);
  Adam<T> opt(model.tensors(), cfg.adam);
  TrainLog log;
  std::size_t step = 0;
  std::vector<std::size_t> order(windows.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng.engine());
    const double lr = cfg.lr_at_epoch(e);
    double sum = 0, lambda = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<FrameWindow> batch;
      for (std::size_t i = b * B; i < std::min((b + 1) * B, order.size()); ++i) batch.push_back(windows[order[i]]);
      auto [x, g] = make_batch<T>(ds, batch, cfg.input_side, cfg.augment ? &aug_rng : nullptr);
      lambda = cfg.loss.form == UalForm::None ? 0.0 : lambda_at(static_cast<double>(step), total_steps, cfg.loss);
      double loss_value = 0;
      try {
        Tape<T>::active().clear();
        opt.prepare();
        Tensor<T> logits = model.logits(x, Phase::Train, T_ > 1 ? T_ : 0);
        Tensor<T> loss = total_loss(logits, g, lambda, cfg.loss);
        loss_value = static_cast<double>(loss.item());
        backward(loss);
        for (const auto& nt : model.tensors())
          if (nt.learnable && nt.tensor.has_grad()) detail::check_finite<T>(nt.tensor.grad(), nt.name.c_str());
      } catch (const NumericalError& err) {
        Tape<T>::active().clear();
        opt.release();
        throw NumericalError("training diverged at step " + std::to_string(step) + ": " + err.what());
      }
      opt.step(lr);
      log.step_loss.push_back(loss_value);
      sum += loss_value;
      ++step;
    }
    log.epochs.push_back({e + 1, sum / static_cast<double>(steps_per_epoch), lambda, lr});
    if (progress) {
      *progress << "epoch " << e + 1 << "/" << cfg.epochs << " loss " << log.epochs.back().loss << " lambda "
                << lambda << " lr " << lr << "\n";
      progress->flush();
    }
  }
  opt.release();
  return log;
}

/// Per-frame probability maps at each mask's resolution. Clip samples run
/// through the clip path in windows of the model's clip length; the last
/// window is aligned to the clip end.
template <typename T>
std::vector<std::vector<Image>> predict_dataset(const Model<T>& model, const Dataset& ds, std::size_t side,
                                                bool clip_mode) {
  NoGradGuard ng;
  const std::size_t T_ = model.config().clip_len;
  std::vector<std::vector<Image>> out;
  for (const auto& s : ds) {
    std::vector<Image> preds(s.frames.size());
    auto run = [&](std::size_t start, std::size_t len, bool clip) {
      std::vector<Image> frames;
      for (std::size_t t = start; t < start + len; ++t) frames.push_back(resize_image(s.frames[t], side, side));
      std::vector<const Image*> fp;
      for (auto& f : frames) fp.push_back(&f);
      Tensor<T> p = clip ? model.forward_clip(to_tensor<T>(fp), len, Phase::Eval)
                         : model.forward(to_tensor<T>(fp), Phase::Eval);
      for (std::size_t t = start; t < start + len; ++t) {
        const Image& m = s.masks[t];
        Tensor<double> pd(Shape{1, 1, side, side});
        for (std::size_t i = 0; i < side * side; ++i)
          pd.data()[i] = static_cast<double>(p.data()[(t - start) * side * side + i]);
        preds[t] = from_tensor(predict_to_gt_size(pd, m.height, m.width));
      }
    };
    if (!clip_mode) {
      for (std::size_t t = 0; t < s.frames.size(); ++t) run(t, 1, false);
    } else {
      if (s.frames.size() < T_)
        throw DataError("predict: clip '" + s.name + "' has " + std::to_string(s.frames.size()) +
                        " frames, model needs " + std::to_string(T_));
      for (std::size_t t = 0; t < s.frames.size(); t += T_) run(std::min(t, s.frames.size() - T_), T_, true);
    }
    out.push_back(std::move(preds));
  }
  return out;
}

}  // namespace znext
