#include "sic/sic_model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace sic {

using ad::Shape;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// parameters

void SicModel::add_param(const std::string& name, const Shape& shape) {
  FTensor t = FTensor::zeros(shape, true);
  params_.emplace(name, t);
  names_.push_back(name);
}

FTensor& SicModel::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

std::vector<FTensor> SicModel::parameters() {
  std::vector<FTensor> out;
  for (const auto& n : names_) out.push_back(params_.at(n));
  return out;
}

bool SicModel::is_encoder_param(const std::string& name) const {
  return name.rfind("cell.", 0) == 0 || name == "cls" || name.rfind("row", 0) == 0;
}

void SicModel::set_encoder_frozen(bool frozen) {
  for (const auto& n : names_)
    if (is_encoder_param(n)) params_.at(n).set_requires_grad(!frozen);
}

namespace {

void init_normal(FTensor& t, Rng& rng, double scale) {
  for (auto& v : t.data()) v = static_cast<float>(scale * rng.normal());
}

}  // namespace

SicModel SicModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SicModel m;
  m.config_ = config;
  const int d = config.d_model;
  const int dff = config.ff_width();

  m.add_param("cell.w1", {2, d});
  m.add_param("cell.b1", {d});
  m.add_param("cell.w2", {d, d});
  m.add_param("cell.b2", {d});
  m.add_param("cls", {1, d});

  auto add_attn_ffn = [&](const std::string& p) {
    for (const char* s : {"ln1.g", "ln1.b", "ln2.g", "ln2.b"}) m.add_param(p + s, {d});
    for (const char* s : {"wq", "wk", "wv", "wo"}) m.add_param(p + s, {d, d});
    for (const char* s : {"bq", "bk", "bv", "bo"}) m.add_param(p + s, {d});
    m.add_param(p + "ffn.w1", {d, dff});
    m.add_param(p + "ffn.b1", {dff});
    m.add_param(p + "ffn.w2", {dff, d});
    m.add_param(p + "ffn.b2", {d});
  };
  for (int l = 0; l < config.n_row_layers; ++l) add_attn_ffn("row" + std::to_string(l) + ".");

  m.add_param("time.w1", {1, d});
  m.add_param("time.b1", {d});
  m.add_param("time.w2", {d, d});
  m.add_param("time.b2", {d});
  m.add_param("time.bins", {config.n_bins, d});  // Formula variant
  m.add_param("event.embed", {2, d});
  m.add_param("event.w1", {1, d});  // Formula variant: MLP on the event scalar
  m.add_param("event.b1", {d});
  m.add_param("event.w2", {d, d});
  m.add_param("event.b2", {d});

  for (int l = 0; l < config.n_dataset_layers; ++l) {
    std::string p = "ds" + std::to_string(l) + ".";
    m.add_param(p + "ln_kv.g", {d});
    m.add_param(p + "ln_kv.b", {d});
    add_attn_ffn(p);
  }

  m.add_param("final.g", {d});
  m.add_param("final.b", {d});
  m.add_param("head.w", {d, config.n_bins});
  m.add_param("head.b", {config.n_bins});

  Rng rng(derive_seed(seed, 0x1217));
  for (const auto& name : m.names_) {
    FTensor& t = m.params_.at(name);
    bool is_gamma = name.size() > 2 && name.substr(name.size() - 2) == ".g";
    bool is_dot_b = name.size() > 2 && name.substr(name.size() - 2) == ".b";
    bool is_attn_bias = name.size() > 2 && name[name.size() - 2] == 'b' &&
                        (name.back() == 'q' || name.back() == 'k' || name.back() == 'v' ||
                         name.back() == 'o');
    bool is_bias = (is_dot_b || is_attn_bias || name.find(".b1") != std::string::npos ||
                    name.find(".b2") != std::string::npos) &&
                   name != "event.embed";
    if (is_gamma) {
      std::fill(t.data().begin(), t.data().end(), 1.0f);
    } else if (is_bias) {
      // zeros
    } else if (name == "cls" || name == "head.w") {
      init_normal(t, rng, 0.02);
    } else if (name == "event.embed" || name == "time.bins") {
      init_normal(t, rng, 0.5);
    } else {
      int fan_in = t.shape()[0];
      init_normal(t, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// canonical ordering and feature preprocessing

namespace {

struct ColumnStats {
  std::vector<double> sorted;  // context column values, ascending
  double mean = 0.0, sd = 1.0;
};

// Permutation-invariant column statistics: sums run over the sorted values, so
// any row order reaches bit-identical results.
ColumnStats column_stats(const Mat& X_ctx, Index j) {
  ColumnStats cs;
  cs.sorted.resize(static_cast<std::size_t>(X_ctx.rows()));
  for (Index i = 0; i < X_ctx.rows(); ++i) cs.sorted[static_cast<std::size_t>(i)] = X_ctx(i, j);
  std::sort(cs.sorted.begin(), cs.sorted.end());
  double s = 0.0;
  for (double v : cs.sorted) s += v;
  cs.mean = s / static_cast<double>(cs.sorted.size());
  double q = 0.0;
  for (double v : cs.sorted) q += (v - cs.mean) * (v - cs.mean);
  double var = q / static_cast<double>(cs.sorted.size());
  cs.sd = var > 1e-24 ? std::sqrt(var) : 1.0;
  return cs;
}

// fraction of context values strictly below v, counting ties as half
double rank_feature(const std::vector<double>& sorted, double v) {
  auto lo = std::lower_bound(sorted.begin(), sorted.end(), v);
  auto hi = std::upper_bound(sorted.begin(), sorted.end(), v);
  double below = static_cast<double>(lo - sorted.begin());
  double equal = static_cast<double>(hi - lo);
  return (below + 0.5 * equal) / static_cast<double>(sorted.size());
}

struct Preprocessed {
  std::vector<Index> col_order;
  std::vector<Index> ctx_order;
  std::vector<ColumnStats> stats;  // in canonical column order
};

Preprocessed canonicalize(const Mat& X_ctx, const Vec& t_ctx, const IVec& e_ctx) {
  const Index p = X_ctx.cols();
  Preprocessed pp;
  std::vector<ColumnStats> stats;
  stats.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) stats.push_back(column_stats(X_ctx, j));

  pp.col_order.resize(static_cast<std::size_t>(p));
  std::iota(pp.col_order.begin(), pp.col_order.end(), Index{0});
  std::sort(pp.col_order.begin(), pp.col_order.end(), [&](Index a, Index b) {
    const auto& sa = stats[static_cast<std::size_t>(a)];
    const auto& sb = stats[static_cast<std::size_t>(b)];
    if (sa.mean != sb.mean) return sa.mean < sb.mean;
    if (sa.sd != sb.sd) return sa.sd < sb.sd;
    return sa.sorted < sb.sorted;
  });
  for (Index j : pp.col_order) pp.stats.push_back(stats[static_cast<std::size_t>(j)]);

  pp.ctx_order.resize(static_cast<std::size_t>(X_ctx.rows()));
  std::iota(pp.ctx_order.begin(), pp.ctx_order.end(), Index{0});
  std::sort(pp.ctx_order.begin(), pp.ctx_order.end(), [&](Index a, Index b) {
    if (t_ctx[a] != t_ctx[b]) return t_ctx[a] < t_ctx[b];
    if (e_ctx[a] != e_ctx[b]) return e_ctx[a] < e_ctx[b];
    for (Index j : pp.col_order)
      if (X_ctx(a, j) != X_ctx(b, j)) return X_ctx(a, j) < X_ctx(b, j);
    return false;
  });
  return pp;
}

// per-cell features in canonical column order: clipped z-score, centered rank
FTensor cell_tensor(const Mat& X, const std::vector<Index>* row_order, const Preprocessed& pp) {
  const Index n = X.rows();
  const Index p = X.cols();
  std::vector<float> cells(static_cast<std::size_t>(n * p * 2));
  for (Index r = 0; r < n; ++r) {
    Index src = row_order ? (*row_order)[static_cast<std::size_t>(r)] : r;
    for (Index jc = 0; jc < p; ++jc) {
      Index j = pp.col_order[static_cast<std::size_t>(jc)];
      const ColumnStats& cs = pp.stats[static_cast<std::size_t>(jc)];
      double v = X(src, j);
      double z = std::clamp((v - cs.mean) / cs.sd, -10.0, 10.0);
      double rk = 2.0 * rank_feature(cs.sorted, v) - 1.0;
      std::size_t off = static_cast<std::size_t>((r * p + jc) * 2);
      cells[off] = static_cast<float>(z);
      cells[off + 1] = static_cast<float>(rk);
    }
  }
  return FTensor::from_values({static_cast<int>(n), static_cast<int>(p), 2}, std::move(cells));
}

struct ForwardCtx {
  SicModel* model;
  bool training = false;
  Rng* dropout_rng = nullptr;

  FTensor P(const std::string& n) { return model->param(n); }

  FTensor maybe_dropout(FTensor x) {
    double rate = model->config().dropout;
    if (!training || rate <= 0.0 || !dropout_rng) return x;
    FTensor mask = FTensor::zeros(x.shape());
    float keep = static_cast<float>(1.0 - rate);
    for (auto& v : mask.data()) v = dropout_rng->bernoulli(rate) ? 0.0f : 1.0f / keep;
    return ad::mul(x, mask);
  }

  FTensor linear(const FTensor& x, const std::string& w, const std::string& b) {
    return ad::add(ad::matmul(x, P(w)), P(b));
  }

  // pre-LN self-attention over tokens, batched over rows: x is (n, T, d)
  FTensor self_attention(FTensor x, const std::string& prefix) {
    const ModelConfig& cfg = model->config();
    const int n = x.dim(0), T = x.dim(1), d = cfg.d_model;
    const int H = cfg.n_heads, dh = d / H;
    FTensor h = ad::layer_norm(x, P(prefix + "ln1.g"), P(prefix + "ln1.b"));
    FTensor flat = ad::reshape(h, {n * T, d});
    FTensor q = linear(flat, prefix + "wq", prefix + "bq");
    FTensor k = linear(flat, prefix + "wk", prefix + "bk");
    FTensor v = linear(flat, prefix + "wv", prefix + "bv");
    std::vector<FTensor> heads;
    for (int hd = 0; hd < H; ++hd) {
      FTensor qh = ad::reshape(ad::slice(q, 1, hd * dh, dh), {n, T, dh});
      FTensor kh = ad::reshape(ad::slice(k, 1, hd * dh, dh), {n, T, dh});
      FTensor vh = ad::reshape(ad::slice(v, 1, hd * dh, dh), {n, T, dh});
      FTensor att = ad::scale(ad::bmm(qh, kh, true), 1.0f / std::sqrt(static_cast<float>(dh)));
      FTensor soft = ad::row_softmax(att);
      heads.push_back(ad::reshape(ad::bmm(soft, vh), {n * T, dh}));
    }
    FTensor cat = ad::concat(heads, 1);
    FTensor proj = maybe_dropout(linear(cat, prefix + "wo", prefix + "bo"));
    return ad::add(x, ad::reshape(proj, {n, T, d}));
  }

  // cross-attention: queries (n_q, d) attend to context (n_c, d)
  FTensor cross_attention(FTensor q_stream, FTensor kv_stream, const std::string& prefix) {
    const ModelConfig& cfg = model->config();
    const int d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    FTensor qn = ad::layer_norm(q_stream, P(prefix + "ln1.g"), P(prefix + "ln1.b"));
    FTensor kvn = ad::layer_norm(kv_stream, P(prefix + "ln_kv.g"), P(prefix + "ln_kv.b"));
    FTensor q = linear(qn, prefix + "wq", prefix + "bq");
    FTensor k = linear(kvn, prefix + "wk", prefix + "bk");
    FTensor v = linear(kvn, prefix + "wv", prefix + "bv");
    std::vector<FTensor> heads;
    for (int hd = 0; hd < H; ++hd) {
      FTensor qh = ad::slice(q, 1, hd * dh, dh);
      FTensor kh = ad::slice(k, 1, hd * dh, dh);
      FTensor vh = ad::slice(v, 1, hd * dh, dh);
      FTensor att =
          ad::scale(ad::matmul(qh, ad::transpose2d(kh)), 1.0f / std::sqrt(static_cast<float>(dh)));
      FTensor soft = ad::row_softmax(att);
      heads.push_back(ad::matmul(soft, vh));
    }
    FTensor cat = ad::concat(heads, 1);
    FTensor proj = maybe_dropout(linear(cat, prefix + "wo", prefix + "bo"));
    return ad::add(q_stream, proj);
  }

  FTensor ffn(FTensor x, const std::string& prefix) {
    const int d = model->config().d_model;
    Shape shape = x.shape();
    FTensor h = ad::layer_norm(x, P(prefix + "ln2.g"), P(prefix + "ln2.b"));
    FTensor flat = ad::reshape(h, {static_cast<int>(x.numel()) / d, d});
    FTensor a = ad::gelu(linear(flat, prefix + "ffn.w1", prefix + "ffn.b1"));
    FTensor o = maybe_dropout(linear(a, prefix + "ffn.w2", prefix + "ffn.b2"));
    return ad::add(x, ad::reshape(o, shape));
  }

  // shared row encoder: cells (n, p, 2) -> pooled CLS representation (n, d)
  FTensor encode_rows(const FTensor& cells) {
    const ModelConfig& cfg = model->config();
    const int n = cells.dim(0), p = cells.dim(1), d = cfg.d_model;
    FTensor flat = ad::reshape(cells, {n * p, 2});
    FTensor t1 = ad::gelu(linear(flat, "cell.w1", "cell.b1"));
    FTensor tokens = ad::reshape(linear(t1, "cell.w2", "cell.b2"), {n, p, d});
    FTensor cls = ad::reshape(
        ad::embedding_select(P("cls"), std::vector<int>(static_cast<std::size_t>(n), 0)),
        {n, 1, d});
    FTensor x = ad::concat(std::vector<FTensor>{tokens, cls}, 1);
    for (int l = 0; l < cfg.n_row_layers; ++l) {
      std::string prefix = "row" + std::to_string(l) + ".";
      x = self_attention(x, prefix);
      x = ffn(x, prefix);
    }
    return ad::reshape(ad::slice(x, 1, p, 1), {n, d});
  }
};

}  // namespace

SicForward sic_forward(SicModel& model, const Mat& X_ctx, const Vec& t_ctx, const IVec& e_ctx,
                       const Mat& X_qry, bool training, Rng* dropout_rng) {
  const Index n_ctx = X_ctx.rows(), n_qry = X_qry.rows(), p = X_ctx.cols();
  if (n_ctx == 0) throw DomainError("sic_forward: empty context");
  if (n_qry == 0) throw DomainError("sic_forward: empty query set");
  if (X_qry.cols() != p)
    throw ad::ShapeError("sic_forward", {static_cast<int>(n_ctx), static_cast<int>(p)},
                         {static_cast<int>(n_qry), static_cast<int>(X_qry.cols())});
  if (p < 1 || p > model.config().max_features)
    throw DomainError("sic_forward: feature count out of range");
  if (t_ctx.size() != n_ctx || e_ctx.size() != n_ctx)
    throw DomainError("sic_forward: context label length mismatch");
  if (e_ctx.sum() == 0) throw DomainError("sic_forward: context must contain an event");
  for (Index i = 0; i < n_ctx; ++i)
    if (!std::isfinite(t_ctx[i]) || t_ctx[i] < 0.0)
      throw DataError("sic_forward: context times must be finite and non-negative");

  ForwardCtx fc{&model, training, dropout_rng};

  Preprocessed pp = canonicalize(X_ctx, t_ctx, e_ctx);
  FTensor ctx_cells = cell_tensor(X_ctx, &pp.ctx_order, pp);
  FTensor qry_cells = cell_tensor(X_qry, nullptr, pp);

  FTensor h_ctx = fc.encode_rows(ctx_cells);
  FTensor h_qry = fc.encode_rows(qry_cells);

  // context-only quantile bins and rank-scaled times
  BinEdges bins = quantile_bins(t_ctx, model.config().n_bins);
  std::vector<double> sorted_t(t_ctx.data(), t_ctx.data() + t_ctx.size());
  std::sort(sorted_t.begin(), sorted_t.end());

  std::vector<float> t_rank(static_cast<std::size_t>(n_ctx));
  std::vector<int> ev(static_cast<std::size_t>(n_ctx));
  std::vector<int> tbin(static_cast<std::size_t>(n_ctx));
  for (Index r = 0; r < n_ctx; ++r) {
    Index src = pp.ctx_order[static_cast<std::size_t>(r)];
    t_rank[static_cast<std::size_t>(r)] = static_cast<float>(rank_feature(sorted_t, t_ctx[src]));
    ev[static_cast<std::size_t>(r)] = e_ctx[src] != 0 ? 1 : 0;
    tbin[static_cast<std::size_t>(r)] = bins.bin_of(t_ctx[src]);
  }

  FTensor lab;
  if (model.config().time_event_variant == TimeEventVariant::Prose) {
    FTensor tvec = FTensor::from_values({static_cast<int>(n_ctx), 1}, t_rank);
    FTensor te = fc.linear(ad::gelu(fc.linear(tvec, "time.w1", "time.b1")), "time.w2", "time.b2");
    FTensor ee = ad::embedding_select(model.param("event.embed"), ev);
    lab = ad::mul(te, ee);
  } else {
    FTensor te = ad::embedding_select(model.param("time.bins"), tbin);
    std::vector<float> evf(ev.begin(), ev.end());
    FTensor evec = FTensor::from_values({static_cast<int>(n_ctx), 1}, evf);
    FTensor ee =
        fc.linear(ad::gelu(fc.linear(evec, "event.w1", "event.b1")), "event.w2", "event.b2");
    lab = ad::mul(te, ee);
  }
  h_ctx = ad::add(h_ctx, lab);

  FTensor q = h_qry;
  for (int l = 0; l < model.config().n_dataset_layers; ++l) {
    std::string prefix = "ds" + std::to_string(l) + ".";
    q = fc.cross_attention(q, h_ctx, prefix);
    q = fc.ffn(q, prefix);
  }

  FTensor hq = ad::layer_norm(q, model.param("final.g"), model.param("final.b"));
  SicForward out;
  out.logits = fc.linear(hq, "head.w", "head.b");
  out.bins = std::move(bins);
  return out;
}

DiscreteSurvival sic_predict(SicModel& model, const SurvivalDataset& context, const Mat& X_qry) {
  context.validate();
  SicForward fwd = sic_forward(model, context.X, context.time, context.event, X_qry, false, nullptr);
  FTensor pmf_t = ad::row_softmax(fwd.logits);
  DiscreteSurvival ds;
  ds.bins = fwd.bins;
  const int nb = pmf_t.dim(1);
  ds.pmf.resize(X_qry.rows(), nb);
  for (Index i = 0; i < X_qry.rows(); ++i)
    for (int k = 0; k < nb; ++k)
      ds.pmf(i, k) = static_cast<double>(pmf_t.data()[static_cast<std::size_t>(i * nb + k)]);
  return ds;
}

// ---------------------------------------------------------------------------
// loss graph (mirrors the plain-matrix deephit implementation)

namespace {

FTensor deephit_loss_graph(const FTensor& logits, const std::vector<int>& bin_idx,
                           const std::vector<int>& event, float alpha, float sigma) {
  const int n = logits.dim(0), nb = logits.dim(1);
  FTensor pmf = ad::row_softmax(logits);

  // inclusive cumulative incidence: F = pmf * U with U upper-triangular ones
  FTensor U = FTensor::zeros({nb, nb});
  for (int j = 0; j < nb; ++j)
    for (int k = j; k < nb; ++k) U.data()[static_cast<std::size_t>(j * nb + k)] = 1.0f;
  FTensor F = ad::matmul(pmf, U);

  FTensor evt_mask = FTensor::zeros({n, nb});
  FTensor cens_mask = FTensor::zeros({n, nb});
  FTensor own_mask = FTensor::zeros({n, nb});
  for (int i = 0; i < n; ++i) {
    std::size_t off = static_cast<std::size_t>(i * nb + bin_idx[static_cast<std::size_t>(i)]);
    (event[static_cast<std::size_t>(i)] ? evt_mask : cens_mask).data()[off] = 1.0f;
    own_mask.data()[off] = 1.0f;
  }

  const float clampf = static_cast<float>(kProbClamp);
  FTensor log_p = ad::log_t(ad::clamp_min(pmf, clampf));
  FTensor one_minus_F = ad::add_scalar(ad::scale(F, -1.0f), 1.0f);
  FTensor log_s = ad::log_t(ad::clamp_min(one_minus_F, clampf));
  FTensor nll =
      ad::scale(ad::add(ad::sum(ad::mul(log_p, evt_mask)), ad::sum(ad::mul(log_s, cens_mask))),
                -1.0f / static_cast<float>(n));

  FTensor amask = FTensor::zeros({n, n});
  std::int64_t n_pairs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (admissible_pair(bin_idx[static_cast<std::size_t>(i)], event[static_cast<std::size_t>(i)],
                          bin_idx[static_cast<std::size_t>(j)],
                          event[static_cast<std::size_t>(j)])) {
        amask.data()[static_cast<std::size_t>(i * n + j)] = 1.0f;
        ++n_pairs;
      }
    }

  FTensor rank;
  if (n_pairs == 0) {
    rank = FTensor::zeros({1});
  } else {
    // G[j,i] = F_j at subject i's bin; pair (i,j) wants F_i(t_i) - F_j(t_i)
    FTensor G = ad::matmul(F, ad::transpose2d(own_mask));
    FTensor f_own = ad::matmul(ad::mul(F, own_mask), FTensor::full({nb, 1}, 1.0f));  // (n,1)
    FTensor rows_const = ad::matmul(f_own, FTensor::full({1, n}, 1.0f));             // (n,n)
    FTensor D = ad::sub(rows_const, ad::transpose2d(G));
    FTensor term = ad::exp_t(ad::scale(D, -1.0f / sigma));
    rank = ad::scale(ad::sum(ad::mul(term, amask)), 1.0f / static_cast<float>(n_pairs));
  }
  return ad::add(ad::scale(nll, alpha), ad::scale(rank, 1.0f - alpha));
}

}  // namespace

// ---------------------------------------------------------------------------
// optimizer and train step

void AdamWState::step(std::vector<FTensor>& params, const std::vector<bool>& trainable,
                      double lr) {
  if (params.size() != trainable.size())
    throw DomainError("AdamWState::step: trainable mask size mismatch");
  if (m.empty()) {
    m.resize(params.size());
    v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[i].data().size(), 0.0f);
      v[i].assign(params[i].data().size(), 0.0f);
    }
  }
  ++t;

  double norm2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable[i]) continue;
    params[i].node()->ensure_grad();
    for (float g : params[i].grad()) norm2 += static_cast<double>(g) * static_cast<double>(g);
  }
  double norm = std::sqrt(norm2);
  double gscale = (grad_clip > 0.0 && norm > grad_clip) ? grad_clip / norm : 1.0;

  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable[i]) continue;
    auto& data = params[i].data();
    auto& grad = params[i].grad();
    for (std::size_t c = 0; c < data.size(); ++c) {
      double g = static_cast<double>(grad[c]) * gscale;
      double mi = beta1 * static_cast<double>(m[i][c]) + (1.0 - beta1) * g;
      double vi = beta2 * static_cast<double>(v[i][c]) + (1.0 - beta2) * g * g;
      m[i][c] = static_cast<float>(mi);
      v[i][c] = static_cast<float>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      double p = static_cast<double>(data[c]);
      p -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p);
      data[c] = static_cast<float>(p);
    }
  }
  for (auto& p : params) p.zero_grad();
}

TrainStepResult sic_train_step(SicModel& model, const std::vector<SurvivalDataset>& batch,
                               AdamWState& opt, double lr, double alpha, double sigma,
                               std::uint64_t step_seed, bool encoder_frozen) {
  if (batch.empty()) throw DomainError("sic_train_step: empty batch");
  model.set_encoder_frozen(encoder_frozen);
  std::vector<FTensor> params = model.parameters();
  for (auto& p : params) p.zero_grad();

  TrainStepResult res;
  int processed = 0;
  const float invB = 1.0f / static_cast<float>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const SurvivalDataset& ds = batch[k];
    const Index n = ds.rows();
    if (n < 2) continue;
    Rng rng(derive_seed(step_seed, 0x7a21, static_cast<std::uint64_t>(k)));

    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    Index n_ctx = 0;
    bool ok = false;
    for (int attempt = 0; attempt < 32 && !ok; ++attempt) {
      rng.shuffle(idx);
      double share = rng.uniform(0.3, 0.9);
      n_ctx = std::clamp<Index>(static_cast<Index>(std::lround(share * double(n))), 1, n - 1);
      int ctx_events = 0;
      for (Index i = 0; i < n_ctx; ++i) ctx_events += ds.event[idx[static_cast<std::size_t>(i)]];
      ok = ctx_events > 0;
    }
    if (!ok) continue;

    const Index n_qry = n - n_ctx;
    Mat X_ctx(n_ctx, ds.features()), X_qry(n_qry, ds.features());
    Vec t_ctx(n_ctx), t_qry(n_qry);
    IVec e_ctx(n_ctx), e_qry(n_qry);
    for (Index i = 0; i < n_ctx; ++i) {
      Index s = idx[static_cast<std::size_t>(i)];
      X_ctx.row(i) = ds.X.row(s);
      t_ctx[i] = ds.time[s];
      e_ctx[i] = ds.event[s];
    }
    for (Index i = 0; i < n_qry; ++i) {
      Index s = idx[static_cast<std::size_t>(n_ctx + i)];
      X_qry.row(i) = ds.X.row(s);
      t_qry[i] = ds.time[s];
      e_qry[i] = ds.event[s];
    }

    SicForward fwd = sic_forward(model, X_ctx, t_ctx, e_ctx, X_qry, true, &rng);
    std::vector<int> qbin(static_cast<std::size_t>(n_qry));
    std::vector<int> qev(static_cast<std::size_t>(n_qry));
    for (Index i = 0; i < n_qry; ++i) {
      qbin[static_cast<std::size_t>(i)] = fwd.bins.bin_of(t_qry[i]);
      qev[static_cast<std::size_t>(i)] = e_qry[i] != 0 ? 1 : 0;
    }
    FTensor loss = deephit_loss_graph(fwd.logits, qbin, qev, static_cast<float>(alpha),
                                      static_cast<float>(sigma));
    double lv = static_cast<double>(loss.scalar());
    if (!std::isfinite(lv)) {
      for (auto& p : params) p.zero_grad();
      res.skipped = true;
      return res;
    }
    FTensor scaled = ad::scale(loss, invB);
    ad::backward(scaled);
    res.loss += lv;
    ++processed;
  }

  if (processed == 0) {
    res.skipped = true;
    return res;
  }
  res.loss /= processed;

  std::vector<bool> trainable;
  trainable.reserve(params.size());
  for (auto& p : params) trainable.push_back(p.requires_grad());
  opt.step(params, trainable, lr);
  return res;
}

// ---------------------------------------------------------------------------
// checkpointing

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
  std::uint32_t len = read_u32(is);
  if (len > (1u << 24)) throw DataError("checkpoint: string length out of range");
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw DataError("checkpoint: truncated file");
  return s;
}

// payloads are little-endian f32; this targets little-endian hosts
void write_f32s(std::ostream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_f32s(std::istream& is, std::vector<float>& v) {
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!is) throw DataError("checkpoint: truncated tensor payload");
}

json config_to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_row_layers", c.n_row_layers},
              {"n_dataset_layers", c.n_dataset_layers},
              {"n_bins", c.n_bins},
              {"max_features", c.max_features},
              {"d_ff", c.d_ff},
              {"dropout", c.dropout},
              {"time_event_variant",
               c.time_event_variant == TimeEventVariant::Prose ? "prose" : "formula"}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_row_layers = j.at("n_row_layers").get<int>();
  c.n_dataset_layers = j.at("n_dataset_layers").get<int>();
  c.n_bins = j.at("n_bins").get<int>();
  c.max_features = j.at("max_features").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.dropout = j.at("dropout").get<double>();
  std::string v = j.at("time_event_variant").get<std::string>();
  if (v == "prose")
    c.time_event_variant = TimeEventVariant::Prose;
  else if (v == "formula")
    c.time_event_variant = TimeEventVariant::Formula;
  else
    throw DataError("checkpoint: unknown time_event_variant: " + v);
  return c;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const SicModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write("SICK", 4);
  write_u32(os, kCheckpointVersion);
  write_str(os, config_to_json(model.config()).dump());

  SicModel& m = const_cast<SicModel&>(model);
  const auto& names = model.param_names();
  write_u32(os, static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const FTensor& t = m.param(name);
    write_str(os, name);
    write_str(os, "f32");
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
  }
  for (const auto& name : names) write_f32s(os, m.param(name).data());
  if (!os) throw DataError("checkpoint: write failed: " + path);
}

SicModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SICK", 4) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  ModelConfig cfg;
  try {
    cfg = config_from_json(json::parse(read_str(is)));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed config block: ") + e.what());
  }

  SicModel model = SicModel::init(cfg, 0);
  std::uint32_t n_tensors = read_u32(is);
  if (n_tensors != model.param_names().size())
    throw DataError("checkpoint: tensor count does not match the architecture");
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_str(is);
    std::string dtype = read_str(is);
    if (dtype != "f32") throw DataError("checkpoint: unsupported dtype " + dtype);
    std::uint32_t rank = read_u32(is);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(read_u32(is)));
    FTensor& t = model.param(name);  // throws DataError on unknown names
    if (t.shape() != shape) throw DataError("checkpoint: shape mismatch for tensor " + name);
    order.push_back(name);
  }
  for (const auto& name : order) read_f32s(is, model.param(name).data());
  return model;
}

}  // namespace sic
