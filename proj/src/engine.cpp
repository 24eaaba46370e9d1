#include "usd/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "usd/errors.hpp"

namespace usd {

double lr_schedule(double lr0, double progress) {
  return lr0 * std::pow(1.0 + 10.0 * progress, -0.75);
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

Matrix augment_rows(const Matrix& features, const std::vector<std::size_t>& batch,
                    const AugmentPolicy& policy, Rng& rng) {
  Matrix out(batch.size(), features.cols);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = augment(features.row(batch[i]), policy, rng);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

LossBreakdown minibatch_step(ModelParams& student, const ModelParams& teacher_view,
                             const Matrix& target_features,
                             const std::vector<std::size_t>& batch,
                             const SeparationResult& sep, CurriculumState& cur,
                             SgdState& velocity, const StepSchedules& sch, Rng rng,
                             std::size_t* triplet_skips) {
  if (batch.empty()) throw std::invalid_argument("minibatch_step: empty batch");
  const std::size_t b = batch.size();
  const std::size_t c_t = student.class_count();

  Rng weak_rng = rng.stream("weak");
  Rng strong_rng = rng.stream("strong");
  Rng triplet_rng = rng.stream("triplet_pick");
  const Matrix weak_in = augment_rows(target_features, batch, sch.weak_policy, weak_rng);
  const Matrix strong_in =
      augment_rows(target_features, batch, sch.strong_policy, strong_rng);

  // Teacher side is a constant for every loss term.
  auto [t_logits, t_trace] = forward(teacher_view, weak_in);
  std::vector<ProbVector> t_probs(b);
  for (std::size_t i = 0; i < b; ++i) t_probs[i] = softmax(t_logits.row(i));

  auto [s_logits, s_trace] = forward(student, strong_in);

  std::vector<std::size_t> known_pos, unknown_pos;
  for (std::size_t i = 0; i < b; ++i) {
    if (sep.pseudo[batch[i]].is_unknown)
      unknown_pos.push_back(i);
    else
      known_pos.push_back(i);
  }

  Matrix d_logits(b, c_t);
  LossBreakdown parts;
  parts.zeta1 = sch.toggles.triplet ? sch.zeta1 : 0.0;
  parts.zeta2 = sch.toggles.consistency ? sch.zeta2 : 0.0;

  // Cross entropy over both subsets, curriculum combined.
  auto subset_ce = [&](const std::vector<std::size_t>& pos) {
    Matrix sub = gather_rows(s_logits, pos);
    std::vector<int> labels(pos.size());
    std::vector<double> weights(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) {
      labels[i] = sep.pseudo[batch[pos[i]]].class_id;
      weights[i] = sep.instance_weight[batch[pos[i]]];
    }
    return ce_label_smoothed(sub, labels, weights, sch.alpha, c_t);
  };

  LossValue ce_k, ce_u;
  if (!known_pos.empty()) {
    ce_k = subset_ce(known_pos);
    parts.ce_known = ce_k.loss;
  }
  if (!unknown_pos.empty()) {
    ce_u = subset_ce(unknown_pos);
    parts.ce_unknown = ce_u.loss;
  }

  // gamma_r depends on this iteration's known CE (the first call only
  // stores the baseline).
  if (sch.toggles.curriculum) {
    if (!known_pos.empty()) curriculum_update(cur, parts.ce_known);
    parts.gamma_used = cur.gamma;
  } else {
    parts.gamma_used = 0.5;
  }

  for (std::size_t i = 0; i < known_pos.size(); ++i)
    for (std::size_t k = 0; k < c_t; ++k)
      d_logits(known_pos[i], k) += parts.gamma_used * ce_k.d_logits(i, k);
  for (std::size_t i = 0; i < unknown_pos.size(); ++i)
    for (std::size_t k = 0; k < c_t; ++k)
      d_logits(unknown_pos[i], k) += (1.0 - parts.gamma_used) * ce_u.d_logits(i, k);

  if (sch.toggles.im && !known_pos.empty()) {
    Matrix sub = gather_rows(s_logits, known_pos);
    ImLossValue im = im_loss(sub);
    parts.im_ent = im.entropy_term;
    parts.im_div = im.diversity_term;
    for (std::size_t i = 0; i < known_pos.size(); ++i)
      for (std::size_t k = 0; k < c_t; ++k)
        d_logits(known_pos[i], k) += im.d_logits(i, k);
  }

  if (sch.toggles.consistency) {
    LossValue con = consistency_loss(s_logits, t_probs);
    parts.consistency = con.loss;
    for (std::size_t i = 0; i < d_logits.data.size(); ++i)
      d_logits.data[i] += parts.zeta2 * con.d_logits.data[i];
  }

  Matrix d_bottleneck;
  bool use_bottleneck = sch.triplet_source == TripletSource::kBottleneck;
  bool have_bottleneck_grad = false;
  if (sch.toggles.triplet) {
    if (known_pos.empty() || unknown_pos.empty()) {
      if (triplet_skips != nullptr) ++*triplet_skips;
    } else {
      const Matrix& t_out =
          use_bottleneck ? t_trace.post[teacher_view.encoder_depth() - 1] : t_logits;
      const Matrix& s_out =
          use_bottleneck ? s_trace.post[student.encoder_depth() - 1] : s_logits;
      if (use_bottleneck) {
        d_bottleneck = Matrix(b, s_out.cols);
        have_bottleneck_grad = true;
      }
      const double inv_k = 1.0 / static_cast<double>(known_pos.size());
      for (std::size_t i : known_pos) {
        const std::size_t j = unknown_pos[triplet_rng.uniform_index(unknown_pos.size())];
        TripletValue tv = triplet_loss(t_out.row(i), s_out.row(i), s_out.row(j));
        parts.triplet += tv.loss * inv_k;
        Matrix& sink = use_bottleneck ? d_bottleneck : d_logits;
        for (std::size_t k = 0; k < tv.d_positive.size(); ++k) {
          sink(i, k) += parts.zeta1 * inv_k * tv.d_positive[k];
          sink(j, k) += parts.zeta1 * inv_k * tv.d_negative[k];
        }
      }
    }
  }

  assemble_total(parts);
  if (!std::isfinite(parts.total))
    throw NumericError("minibatch_step: non-finite total loss");

  Gradients grads = backward(student, s_trace, d_logits,
                             have_bottleneck_grad ? &d_bottleneck : nullptr);
  if (sch.lr > 0.0)
    sgd_step(student, grads, sch.lr, sch.momentum, sch.weight_decay, velocity);
  return parts;
}

ModelParams train_source(const RunConfig& cfg, const LabeledSet& source,
                         double* val_accuracy) {
  Rng root(cfg.seed);
  ModelParams model =
      make_mlp(source.features.cols, cfg.hidden, cfg.bottleneck,
               static_cast<std::size_t>(source.class_count), root.stream("source_init"));
  const std::size_t n = source.features.rows;
  const std::size_t n_val = n / 10;
  const std::size_t n_train = n - n_val;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = root.stream("source_split");
  split_rng.shuffle(order);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> val_idx(order.begin() + n_train, order.end());

  SgdState vel = make_sgd_state(model);
  const std::size_t batches =
      std::max<std::size_t>(1, (n_train + cfg.batch_size - 1) / cfg.batch_size);
  const std::size_t total_iters = std::max<std::size_t>(1, cfg.source_epochs * batches);
  std::size_t iter = 0;
  for (std::size_t epoch = 1; epoch <= cfg.source_epochs; ++epoch) {
    Rng erng = root.stream("source_epoch", epoch);
    erng.shuffle(train_idx);
    for (std::size_t b0 = 0; b0 < n_train; b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(b0 + cfg.batch_size, n_train);
      std::vector<std::size_t> batch(train_idx.begin() + b0, train_idx.begin() + b1);
      Matrix x = gather_rows(source.features, batch);
      std::vector<int> y(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) y[i] = source.labels[batch[i]];
      std::vector<double> w(batch.size(), 1.0);
      auto [logits, trace] = forward(model, x);
      LossValue ce = ce_label_smoothed(logits, y, w, cfg.alpha,
                                       static_cast<std::size_t>(source.class_count));
      if (!std::isfinite(ce.loss))
        throw NumericError("train_source: loss diverged at epoch " +
                           std::to_string(epoch));
      Gradients grads = backward(model, trace, ce.d_logits);
      const double lr = lr_schedule(
          cfg.lr, static_cast<double>(iter) / static_cast<double>(total_iters));
      sgd_step(model, grads, lr, cfg.momentum, cfg.weight_decay, vel);
      ++iter;
    }
  }

  if (val_accuracy != nullptr) {
    if (val_idx.empty()) {
      *val_accuracy = 0.0;
    } else {
      Matrix xv = gather_rows(source.features, val_idx);
      auto [logits, trace] = forward(model, xv);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < val_idx.size(); ++i) {
        auto row = logits.row(i);
        const int pred = static_cast<int>(
            std::max_element(row.begin(), row.end()) - row.begin());
        if (pred == source.labels[val_idx[i]]) ++correct;
      }
      *val_accuracy =
          static_cast<double>(correct) / static_cast<double>(val_idx.size());
    }
  }
  return model;
}

namespace {

SeparationResult all_known_separation(const ModelParams& student,
                                      const UnlabeledSet& target,
                                      const SeparationConfig& scfg, Rng rng) {
  // Warm-up epochs skip the GMM split entirely: every sample keeps its
  // ensembled pseudolabel with unit weight.
  auto [labels, probs] = ensemble_pseudolabels(student, target, scfg, rng);
  SeparationResult res;
  const std::size_t n = target.features.rows;
  res.criterion.assign(n, 0.0);
  res.w_known.assign(n, 1.0);
  res.instance_weight.assign(n, 1.0);
  res.pseudo.resize(n);
  res.degenerate = true;
  res.fit.degenerate = true;
  for (std::size_t i = 0; i < n; ++i) {
    res.pseudo[i] = {labels[i], false};
    res.known_indices.push_back(i);
  }
  return res;
}

AdaptResult run_adapt(const RunConfig& cfg, EngineState st,
                      const UnlabeledSet& target,
                      const SeparationObserver& observer) {
  const std::size_t c_s = st.student.class_count() - 1;
  const std::size_t n = target.features.rows;
  Rng root(cfg.seed);
  const double fstd = feature_std(target.features);

  AdaptResult result;
  const std::size_t batches =
      std::max<std::size_t>(1, (n + cfg.batch_size - 1) / cfg.batch_size);
  const std::size_t total_iters = std::max<std::size_t>(1, cfg.epochs * batches);

  for (std::size_t epoch = st.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng erng = root.stream("epoch", epoch);

    SeparationConfig scfg;
    scfg.known_classes = c_s;
    scfg.delta_t = cfg.delta_t;
    scfg.weak_views = cfg.weak_views;
    scfg.strong_views = cfg.strong_views;
    scfg.weak_policy = cfg.augment.weak(fstd);
    scfg.strong_policy = cfg.augment.strong(fstd);
    scfg.criterion = cfg.criterion;
    scfg.scheme = cfg.scheme;
    if (cfg.gmm_warm_start && st.has_last_fit) scfg.warm_start = &st.last_fit;

    const ModelParams& separator =
        cfg.toggles.co_training ? st.teacher : st.student;
    SeparationResult sep =
        (epoch <= cfg.warmup_epochs)
            ? all_known_separation(st.student, target, scfg,
                                   erng.stream("separation"))
            : separate(target, st.student, separator, scfg,
                       erng.stream("separation"));
    st.last_fit = sep.fit;
    st.has_last_fit = true;
    if (observer) observer(epoch, sep);

    EpochReport report;
    report.epoch = epoch;
    report.known_count = sep.known_indices.size();
    report.unknown_count = sep.unknown_indices.size();
    report.fit = sep.fit;
    report.degenerate = sep.degenerate;
    report.zeta2 = zeta2_schedule(epoch, cfg.epochs, cfg.zeta2_max);
    report.ema_m = ema_momentum_schedule(epoch, cfg.m_max);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = erng.stream("shuffle");
    shuffle_rng.shuffle(order);

    LossBreakdown sum;
    std::size_t steps = 0;
    for (std::size_t b0 = 0, bi = 0; b0 < n; b0 += cfg.batch_size, ++bi) {
      const std::size_t b1 = std::min(b0 + cfg.batch_size, n);
      std::vector<std::size_t> batch(order.begin() + b0, order.begin() + b1);
      StepSchedules sch;
      const std::size_t iter = (epoch - 1) * batches + bi;
      sch.lr = lr_schedule(
          cfg.lr, static_cast<double>(iter) / static_cast<double>(total_iters));
      sch.momentum = cfg.momentum;
      sch.weight_decay = cfg.weight_decay;
      sch.alpha = cfg.alpha;
      sch.zeta1 = cfg.zeta1;
      sch.zeta2 = report.zeta2;
      sch.toggles = cfg.toggles;
      sch.triplet_source = cfg.triplet_source;
      sch.weak_policy = scfg.weak_policy;
      sch.strong_policy = scfg.strong_policy;
      sch.known_classes = c_s;
      const ModelParams& teacher_view =
          cfg.toggles.co_training ? st.teacher : st.student;
      LossBreakdown parts;
      try {
        parts = minibatch_step(st.student, teacher_view, target.features, batch,
                               sep, st.curriculum, st.velocity, sch,
                               erng.stream("batch", bi),
                               &report.triplet_skipped_batches);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " +
                           std::to_string(epoch) + ", iteration " +
                           std::to_string(bi) + ")");
      }
      sum.ce_known += parts.ce_known;
      sum.ce_unknown += parts.ce_unknown;
      sum.im_ent += parts.im_ent;
      sum.im_div += parts.im_div;
      sum.triplet += parts.triplet;
      sum.consistency += parts.consistency;
      sum.total += parts.total;
      sum.gamma_used = parts.gamma_used;
      sum.zeta1 = parts.zeta1;
      sum.zeta2 = parts.zeta2;
      ++steps;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    sum.ce_known *= inv;
    sum.ce_unknown *= inv;
    sum.im_ent *= inv;
    sum.im_div *= inv;
    sum.triplet *= inv;
    sum.consistency *= inv;
    sum.total *= inv;
    report.mean_loss = sum;
    report.gamma = st.curriculum.gamma;

    if (cfg.toggles.co_training)
      ema_update(st.teacher, st.student, report.ema_m);
    else
      st.teacher = st.student;

    for (const Layer& l : st.student.layers)
      if (!all_finite(l.w))
        throw NumericError("adapt: non-finite parameters after epoch " +
                           std::to_string(epoch));

    if (target.hidden_labels)
      report.eval = evaluate(st.student, target.features, *target.hidden_labels, c_s);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.reports.push_back(std::move(report));

    st.epochs_done = epoch;
    if (cfg.checkpoint_path && cfg.checkpoint_epoch &&
        *cfg.checkpoint_epoch == epoch) {
      save_engine_state(*cfg.checkpoint_path, config_hash(cfg), cfg.seed, st);
    }
  }

  result.student = std::move(st.student);
  result.teacher = std::move(st.teacher);
  return result;
}

}  // namespace

AdaptResult adapt(const RunConfig& cfg, const ModelParams& source_model,
                  const UnlabeledSet& target, const SeparationObserver& observer) {
  EngineState st;
  auto [student, teacher] = init_target_models(source_model, cfg.freeze_known_bias);
  st.student = std::move(student);
  st.teacher = std::move(teacher);
  st.velocity = make_sgd_state(st.student);
  st.curriculum.gamma = cfg.gamma0;
  st.curriculum.beta = cfg.beta;
  return run_adapt(cfg, std::move(st), target, observer);
}

AdaptResult adapt_resume(const RunConfig& cfg, EngineState state,
                         const UnlabeledSet& target,
                         const SeparationObserver& observer) {
  return run_adapt(cfg, std::move(state), target, observer);
}

}  // namespace usd
