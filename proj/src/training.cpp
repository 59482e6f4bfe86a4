#include "uegan/training.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "uegan/inference.hpp"
#include "uegan/losses.hpp"
#include "uegan/metrics.hpp"

namespace uegan {

double poly_lr(double lr0, double power, int step, int total_steps) {
    if (total_steps < 1) throw ContractError("poly_lr: total_steps must be positive");
    if (step < 0 || step > total_steps) throw ContractError("poly_lr: step out of range");
    return lr0 * std::pow(1.0 - static_cast<double>(step) / total_steps, power);
}

void Adam::step(const std::vector<TensorP>& params, double lr) {
    if (slots_.empty()) {
        slots_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            slots_[i].m.assign(params[i]->size(), 0.f);
            slots_[i].v.assign(params[i]->size(), 0.f);
        }
    }
    if (slots_.size() != params.size())
        throw ContractError("Adam: parameter list changed between steps");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (p.grad.size() != p.data.size()) p.ensure_grad();
        auto& m = slots_[i].m;
        auto& v = slots_[i].v;
        if (m.size() != p.size()) throw ContractError("Adam: parameter shape changed");
        double wd = p.decay_exempt ? 0.0 : wd_;
        for (std::size_t j = 0; j < p.size(); ++j) {
            double g = static_cast<double>(p.grad[j]) + wd * static_cast<double>(p.data[j]);
            double mj = beta1_ * m[j] + (1.0 - beta1_) * g;
            double vj = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            double mhat = mj / bc1;
            double vhat = vj / bc2;
            p.data[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

namespace {

const float kPalette[4][3] = {
    {0.85f, 0.25f, 0.20f},  // terracotta
    {0.90f, 0.90f, 0.93f},  // whitewash
    {0.88f, 0.72f, 0.30f},  // tan
    {0.50f, 0.58f, 0.85f},  // steel blue
};

// One scene attempt; the caller rejects images whose foreground fraction
// falls outside the target band. `placed` reports how many buildings fit —
// crowded draws can fail placement, and a scene needs at least two.
SynthSample synth_scene(int size, Rng& rng, int& placed) {
    SynthSample s;
    s.image = Tensor(1, 3, size, size);
    s.mask = Mask(size, size);

    float gr = static_cast<float>(rng.uniform(0.18, 0.32));
    float gg = static_cast<float>(rng.uniform(0.32, 0.48));
    float gb = static_cast<float>(rng.uniform(0.14, 0.26));
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            s.image.at(0, 0, y, x) = gr;
            s.image.at(0, 1, y, x) = gg;
            s.image.at(0, 2, y, x) = gb;
        }

    // Roads reuse a roof color so color alone cannot separate the classes.
    if (rng.bernoulli(0.3)) {
        int width = rng.randint(3, 5);
        bool horizontal = rng.bernoulli(0.5);
        int off = rng.randint(0, size - width);
        const float* rc = kPalette[rng.randint(0, 3)];
        for (int t = 0; t < width; ++t)
            for (int u = 0; u < size; ++u) {
                int y = horizontal ? off + t : u;
                int x = horizontal ? u : off + t;
                for (int c = 0; c < 3; ++c) s.image.at(0, c, y, x) = rc[c];
            }
    }

    Mask blocked(size, size);  // occupancy plus the enforced gap
    int target = rng.randint(2, 8);
    int lim = std::min(24, size / 2);
    placed = 0;
    for (int b = 0; b < target; ++b) {
        for (int attempt = 0; attempt < 20; ++attempt) {
            // size-biased: larger roofs dominate but the whole 6..lim range
            // stays reachable; small canvases get a weaker bias because they
            // cannot hold several large rectangles inside the foreground band
            int draws = size >= 48 ? 4 : 2;
            auto side = [&] {
                int v = rng.randint(6, lim);
                for (int i = 1; i < draws; ++i) v = std::max(v, rng.randint(6, lim));
                return v;
            };
            double hw = side() * 0.5;
            double hh = side() * 0.5;
            double angle = rng.bernoulli(0.35) ? rng.uniform(0.0, 1.5707963267948966) : 0.0;
            double rad = std::sqrt(hw * hw + hh * hh);
            int margin = static_cast<int>(rad) + 2;
            if (2 * margin >= size) continue;
            double cx = rng.uniform(margin, size - margin);
            double cy = rng.uniform(margin, size - margin);
            double ca = std::cos(angle), sa = std::sin(angle);
            auto covered = [&](int y, int x) {
                double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                double u = dx * ca + dy * sa;
                double v = -dx * sa + dy * ca;
                return std::abs(u) <= hw && std::abs(v) <= hh;
            };
            int y0 = std::max(0, static_cast<int>(cy - rad) - 1);
            int y1 = std::min(size - 1, static_cast<int>(cy + rad) + 1);
            int x0 = std::max(0, static_cast<int>(cx - rad) - 1);
            int x1 = std::min(size - 1, static_cast<int>(cx + rad) + 1);
            bool clash = false;
            for (int y = y0; y <= y1 && !clash; ++y)
                for (int x = x0; x <= x1 && !clash; ++x)
                    if (covered(y, x) && blocked.at(y, x)) clash = true;
            if (clash) continue;
            const float* roof = kPalette[rng.randint(0, 3)];
            float shade = static_cast<float>(rng.uniform(0.95, 1.05));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    if (!covered(y, x)) continue;
                    s.mask.at(y, x) = 1;
                    for (int c = 0; c < 3; ++c)
                        s.image.at(0, c, y, x) = std::clamp(roof[c] * shade, 0.f, 1.f);
                    for (int dy = -2; dy <= 2; ++dy)
                        for (int dx = -2; dx <= 2; ++dx) {
                            int yy = y + dy, xx = x + dx;
                            if (yy >= 0 && yy < size && xx >= 0 && xx < size)
                                blocked.at(yy, xx) = 1;
                        }
                }
            ++placed;
            break;
        }
    }

    for (auto& v : s.image.data)
        v = std::clamp(v + static_cast<float>(rng.normal()) * 0.05f, 0.f, 1.f);
    return s;
}

Mask transform_mask(const Mask& m, int op) {
    Tensor t(1, 1, m.h, m.w);
    for (std::size_t i = 0; i < m.v.size(); ++i) t.data[i] = static_cast<float>(m.v[i]);
    Tensor tt = transform_tensor(t, op);
    Mask out(tt.h, tt.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = tt.data[i] > 0.5f ? 1 : 0;
    return out;
}

}  // namespace

std::vector<SynthSample> synth_dataset(int count, int size, uint64_t seed) {
    // below 32 px the frame cannot hold two separated 6 px buildings
    if (count < 1 || size < 32) throw ContractError("synth_dataset: bad count or size");
    Rng rng(seed);
    std::vector<SynthSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SynthSample s;
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 10000) throw ContractError("synth_dataset: cannot satisfy scene contracts");
            int placed = 0;
            s = synth_scene(size, rng, placed);
            if (placed < 2) continue;
            std::size_t fg = 0;
            for (uint8_t b : s.mask.v) fg += b;
            double frac = static_cast<double>(fg) / static_cast<double>(s.mask.size());
            if (frac >= 0.05 && frac <= 0.4) break;
        }
        out.push_back(std::move(s));
    }
    return out;
}

SynthSample augment(const SynthSample& s, Rng& rng) {
    // Draws happen in a fixed order so the stream does not depend on which
    // transforms fire.
    bool hf = rng.bernoulli(0.5);
    bool vf = rng.bernoulli(0.5);
    int quarter = rng.randint(0, 3);
    float brightness = 1.f + static_cast<float>(rng.uniform(-0.2, 0.2));
    float contrast = 1.f + static_cast<float>(rng.uniform(-0.2, 0.2));
    float saturation = 1.f + static_cast<float>(rng.uniform(-0.2, 0.2));

    SynthSample out = s;
    auto geo = [&out](int op) {
        out.image = transform_tensor(out.image, op);
        out.mask = transform_mask(out.mask, op);
    };
    if (hf) geo(1);
    if (vf) geo(2);
    if (quarter > 0) geo(2 + quarter);  // 3=rot90, 4=rot180, 5=rot270

    double mean = 0;
    for (float v : out.image.data) mean += v;
    mean /= static_cast<double>(out.image.size());
    float mu = static_cast<float>(mean);
    std::size_t plane = out.image.size() / 3;
    for (std::size_t i = 0; i < plane; ++i) {
        float r = out.image.data[i], g = out.image.data[plane + i],
              b = out.image.data[2 * plane + i];
        float gray = 0.299f * r + 0.587f * g + 0.114f * b;
        auto jitter = [&](float v) {
            v = gray + (v - gray) * saturation;
            v = mu + (v - mu) * contrast;
            return std::clamp(v * brightness, 0.f, 1.f);
        };
        out.image.data[i] = jitter(r);
        out.image.data[plane + i] = jitter(g);
        out.image.data[2 * plane + i] = jitter(b);
    }
    return out;
}

Mask downsample_mask_majority(const Mask& m) {
    if (m.h % 2 != 0 || m.w % 2 != 0)
        throw DimensionError("downsample_mask_majority: H and W must be even");
    Mask out(m.h / 2, m.w / 2);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            int fg = m.at(2 * y, 2 * x) + m.at(2 * y, 2 * x + 1) + m.at(2 * y + 1, 2 * x) +
                     m.at(2 * y + 1, 2 * x + 1);
            out.at(y, x) = fg >= 2 ? 1 : 0;  // 2-2 ties count as building
        }
    return out;
}

std::vector<Mask> mask_pyramid(const Mask& full, int levels) {
    if (levels < 1) throw ContractError("mask_pyramid: levels must be positive");
    std::vector<Mask> pyr(static_cast<std::size_t>(levels));
    pyr.back() = full;
    for (int i = levels - 2; i >= 0; --i)
        pyr[static_cast<std::size_t>(i)] = downsample_mask_majority(pyr[static_cast<std::size_t>(i) + 1]);
    return pyr;
}

std::string LossReport::json_line() const {
    nlohmann::json j;
    j["step"] = step;
    j["lr"] = lr;
    j["dice"] = dice;
    j["hd"] = hd;
    j["adv"] = adv;
    j["total"] = total;
    return j.dump();
}

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg),
      gen_(build_generator<float>(cfg.model, cfg.seed)),
      critic_(build_critic<float>(cfg.model, cfg.seed + 1)),
      gen_opt_(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay),
      critic_opt_(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay),
      train_(synth_dataset(cfg.train_count, cfg.image_size, cfg.seed + 2)),
      val_(synth_dataset(cfg.val_count, cfg.image_size, cfg.seed + 3)),
      batch_rng_(cfg.seed + 4) {
    cfg_.validate();
}

namespace {

TensorP batch_images(const std::vector<SynthSample>& batch) {
    const Tensor& first = batch[0].image;
    auto out = make_tensor<float>(static_cast<int>(batch.size()), 3, first.h, first.w);
    std::size_t per = first.size();
    for (std::size_t i = 0; i < batch.size(); ++i)
        std::copy(batch[i].image.data.begin(), batch[i].image.data.end(),
                  out->data.begin() + static_cast<std::ptrdiff_t>(i * per));
    return out;
}

TensorP batch_masks(const std::vector<Mask>& masks) {
    auto out = make_tensor<float>(static_cast<int>(masks.size()), 1, masks[0].h, masks[0].w);
    std::size_t per = masks[0].size();
    for (std::size_t i = 0; i < masks.size(); ++i)
        for (std::size_t j = 0; j < per; ++j)
            out->data[i * per + j] = static_cast<float>(masks[i].v[j]);
    return out;
}

}  // namespace

LossReport Trainer::train_step() {
    double lr = poly_lr(cfg_.lr0, cfg_.power, step_, cfg_.steps);
    std::vector<SynthSample> batch;
    batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
    for (int i = 0; i < cfg_.batch_size; ++i) {
        int idx = batch_rng_.randint(0, static_cast<int>(train_.size()) - 1);
        batch.push_back(augment(train_[static_cast<std::size_t>(idx)], batch_rng_));
    }
    auto images = batch_images(batch);
    int levels = cfg_.model.depth + 1;
    std::vector<std::vector<Mask>> pyramids;
    for (const auto& s : batch) pyramids.push_back(mask_pyramid(s.mask, levels));
    std::vector<TensorP> level_gts;
    for (int lvl = 0; lvl < levels; ++lvl) {
        std::vector<Mask> lvl_masks;
        for (const auto& p : pyramids) lvl_masks.push_back(p[static_cast<std::size_t>(lvl)]);
        level_gts.push_back(batch_masks(lvl_masks));
    }
    LossConfig loss_cfg = cfg_.loss_config(levels);
    LossReport report;
    report.step = step_;
    report.lr = lr;

    // Critic phase: generator runs without a tape; both critic branches are
    // live and its batchnorm running stats are updated here only.
    {
        Graph g;
        g.grad_enabled = false;
        auto go = generator_forward(g, images, gen_, cfg_.model, {true, false});
        auto fake_probs = g.sigmoid(go.final().logits);
        g.grad_enabled = true;
        auto fake_pyr = critic_forward(g, images, fake_probs, critic_, cfg_.model, {true, true});
        auto real_pyr =
            critic_forward(g, images, level_gts.back(), critic_, cfg_.model, {true, true});
        auto dist = multiscale_l1_loss(g, fake_pyr, real_pyr);
        auto critic_loss = g.scale(dist, -1.f);  // the critic widens the gap
        critic_.zero_grads();
        g.backward(critic_loss);
        critic_opt_.step(critic_.trainable(), lr);
    }

    // Generator phase: critic frozen (its gradients are discarded and its
    // running stats are left untouched).
    {
        Graph g;
        auto go = generator_forward(g, images, gen_, cfg_.model, {true, true});
        std::vector<TensorP> level_probs;
        for (const auto& pm : go.intermediates) level_probs.push_back(g.sigmoid(pm.logits));
        g.grad_enabled = false;
        auto real_pyr =
            critic_forward(g, images, level_gts.back(), critic_, cfg_.model, {true, false});
        g.grad_enabled = true;
        auto fake_pyr = critic_forward(g, images, level_probs.back(), critic_, cfg_.model,
                                       {true, false});
        auto adv = multiscale_l1_loss(g, fake_pyr, real_pyr);
        TensorP dice, hd;
        auto total = total_generator_loss(g, level_probs, level_gts, adv, loss_cfg, &dice, &hd);
        gen_.zero_grads();
        critic_.zero_grads();
        g.backward(total);
        gen_opt_.step(gen_.trainable(), lr);
        critic_.zero_grads();
        report.dice = dice ? dice->data[0] : 0.0;
        report.hd = hd ? hd->data[0] : 0.0;
        report.adv = adv->data[0];
        report.total = total->data[0];
    }
    ++step_;
    return report;
}

std::vector<LossReport> Trainer::train(const std::function<void(const LossReport&)>& on_step) {
    std::vector<LossReport> reports;
    reports.reserve(static_cast<std::size_t>(cfg_.steps));
    while (step_ < cfg_.steps) {
        reports.push_back(train_step());
        if (on_step) on_step(reports.back());
    }
    return reports;
}

Raster Trainer::predict(const Tensor& image) const {
    Graph g;
    g.grad_enabled = false;
    auto x = std::make_shared<Tensor>(image);
    x->requires_grad = false;
    auto go = generator_forward(g, x, gen_, cfg_.model, {false, false});
    auto probs = g.sigmoid(go.final().logits);
    Raster out(probs->h, probs->w);
    out.v = probs->data;
    return out;
}

ValReport Trainer::validate() const {
    std::vector<Raster> preds;
    std::vector<Mask> gts;
    auto model = [this](const Tensor& img) { return predict(img); };
    for (const auto& s : val_) {
        preds.push_back(tta_predict(s.image, model));
        gts.push_back(s.mask);
    }
    ValReport rep;
    rep.threshold = select_threshold(preds, gts, "iou");
    ConfusionCounts agg;
    ObjectCounts objects;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        Mask bin = binarize(preds[i], static_cast<float>(rep.threshold));
        agg += confusion(bin, gts[i]);
        objects += object_match(bin, gts[i], cfg_.metric);
    }
    auto px = pixel_metrics_from_counts(agg);
    rep.iou = px.iou;
    rep.f1 = px.f1;
    rep.object_f1 = objects.f1();
    return rep;
}

}  // namespace uegan
