#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "avsa/autodiff.hpp"
#include "avsa/error.hpp"
#include "avsa/nn.hpp"
#include "avsa/rng.hpp"

namespace avsa {

enum class TranslatorMode { kTransformer, kPerClipMlp, kIdentity };

struct TranslatorConfig {
  int depth = 2;
  int model_dim = 512;
  int expansion = 4;
  TranslatorMode mode = TranslatorMode::kTransformer;
};

// Cross-modal feature translator. In transformer mode each layer is a
// single-head attention block without positional encodings followed by a
// clip-wise feed-forward block; all linear maps are bias-free. The mlp mode
// swaps attention for a per-clip perceptron with the same parameter count
// (hidden width 2 * model_dim, so 4 d^2 weights either way); identity mode
// passes features through untouched.
template <typename T>
class Translator {
 public:
  Translator() = default;
  Translator(ParamStore<T>& store, const std::string& prefix, const TranslatorConfig& cfg,
             Rng& rng)
      : cfg_(cfg) {
    if (cfg.mode == TranslatorMode::kIdentity) return;
    const int d = cfg.model_dim, hid = cfg.expansion * d;
    for (int l = 0; l < cfg.depth; ++l) {
      Layer layer;
      const std::string p = prefix + ".layer" + std::to_string(l + 1);
      if (cfg.mode == TranslatorMode::kTransformer) {
        layer.w_key = make_weight(store, p + ".w_key", d, d, rng);
        layer.w_qr = make_weight(store, p + ".w_qr", d, d, rng);
        layer.w_val = make_weight(store, p + ".w_val", d, d, rng);
        layer.w_0 = make_weight(store, p + ".w_0", d, d, rng);
      } else {
        layer.w_m1 = make_weight(store, p + ".w_m1", d, 2 * d, rng);
        layer.w_m2 = make_weight(store, p + ".w_m2", 2 * d, d, rng);
      }
      layer.norm_att = LayerNorm<T>(store, p + ".norm_att", d);
      layer.w_1 = make_weight(store, p + ".w_1", d, hid, rng);
      layer.w_2 = make_weight(store, p + ".w_2", hid, d, rng);
      layer.norm_ff = LayerNorm<T>(store, p + ".norm_ff", d);
      layers_.push_back(std::move(layer));
    }
  }

  // x: [K, model_dim] -> [K, model_dim]
  Tensor<T> forward(const Tensor<T>& x) const {
    if (cfg_.mode == TranslatorMode::kIdentity) return x;
    if (x.rank() != 2 || x.dim(1) != cfg_.model_dim)
      throw ShapeError("Translator: expected [K, model_dim]");
    Tensor<T> h = x;
    for (const Layer& l : layers_) {
      Tensor<T> mixed;
      if (cfg_.mode == TranslatorMode::kTransformer) {
        const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(cfg_.model_dim));
        Tensor<T> key = matmul(h, l.w_key);
        Tensor<T> qr = matmul(h, l.w_qr);
        // scores[k, k'] = <key_k, qr_k'> / sqrt(d)
        Tensor<T> scores = scale(matmul(key, permute(qr, {1, 0})), inv_sqrt_d);
        Tensor<T> alpha = softmax_lastdim(scores);
        mixed = matmul(matmul(alpha, matmul(h, l.w_val)), l.w_0);
      } else {
        mixed = matmul(relu(matmul(h, l.w_m1)), l.w_m2);
      }
      Tensor<T> y = l.norm_att.forward(add(h, mixed));
      Tensor<T> ff = matmul(relu(matmul(y, l.w_1)), l.w_2);
      h = l.norm_ff.forward(add(y, ff));
    }
    return h;
  }

  const TranslatorConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Tensor<T> w_key, w_qr, w_val, w_0;  // transformer mode
    Tensor<T> w_m1, w_m2;               // mlp mode
    Tensor<T> w_1, w_2;
    LayerNorm<T> norm_att, norm_ff;
  };

  static Tensor<T> make_weight(ParamStore<T>& store, const std::string& name, int in,
                               int out, Rng& rng) {
    Tensor<T> w = store.create(name, {in, out});
    init_xavier_uniform(w, in, out, rng);
    return w;
  }

  TranslatorConfig cfg_;
  std::vector<Layer> layers_;
};

// Bias-free linear projection into the space where cosine similarities are
// compared. One head per modality (and per training phase).
template <typename T>
struct ProjectionHead {
  Tensor<T> weight;

  ProjectionHead() = default;
  ProjectionHead(ParamStore<T>& store, const std::string& name, int in, int out, Rng& rng) {
    weight = store.create(name, {in, out});
    init_xavier_uniform(weight, in, out, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return matmul(x, weight); }
};

inline constexpr int kProjectionDim = 128;

// Cosine similarities between one projected query row and every projected
// proposal row: [P].
template <typename T>
Tensor<T> projected_similarities(const Tensor<T>& query, const Tensor<T>& proposals,
                                 const ProjectionHead<T>& head_query,
                                 const ProjectionHead<T>& head_proposals) {
  if (query.rank() != 2 || query.dim(0) != 1)
    throw ShapeError("projected_similarities: query must be [1, d]");
  const int p = proposals.dim(0);
  Tensor<T> q = head_query.forward(query);
  Tensor<T> t = head_proposals.forward(proposals);
  return cosine_similarity(rows(q, std::vector<int>(p, 0)), t);
}

// -log softmax of the target similarity against all proposals at
// temperature tau. Similarities: [P]; target indexes into them.
template <typename T>
Tensor<T> info_nce_from_similarities(const Tensor<T>& sims, int target, T tau) {
  if (tau <= T(0)) throw ConfigError("info_nce: tau must be positive");
  const int p = static_cast<int>(sims.numel());
  if (p == 0) throw ShapeError("info_nce: empty proposal set");
  if (target < 0 || target >= p) throw ConfigError("info_nce: target not in proposals");
  return cross_entropy_from_logits(scale(reshape(sims, {1, p}), T(1) / tau), {target});
}

template <typename T>
Tensor<T> info_nce(const Tensor<T>& query, const Tensor<T>& proposals, int target,
                   const ProjectionHead<T>& head_query,
                   const ProjectionHead<T>& head_proposals, T tau) {
  return info_nce_from_similarities(
      projected_similarities(query, proposals, head_query, head_proposals), target, tau);
}

// Pairwise cosine similarities of two projected feature banks: [n, m].
template <typename T>
Tensor<T> similarity_matrix(const Tensor<T>& queries, const Tensor<T>& proposals,
                            const ProjectionHead<T>& head_queries,
                            const ProjectionHead<T>& head_proposals) {
  Tensor<T> q = normalize_rows(head_queries.forward(queries));
  Tensor<T> t = normalize_rows(head_proposals.forward(proposals));
  return matmul(q, permute(t, {1, 0}));
}

// Symmetric batch-level contrastive loss over per-video feature pairs:
// for each video both directions of the InfoNCE term, proposals being all
// opposite-modality features in the batch. Sum reduction.
template <typename T>
Tensor<T> avc_loss(const Tensor<T>& video_feats, const Tensor<T>& audio_feats,
                   const ProjectionHead<T>& proj_v, const ProjectionHead<T>& proj_a,
                   T tau) {
  if (video_feats.rank() != 2 || video_feats.shape() != audio_feats.shape())
    throw ShapeError("avc_loss: feature banks must be matching [n, d]");
  const int n = video_feats.dim(0);
  if (n < 2) throw ShapeError("avc_loss: batch too small");
  std::vector<int> diag(n);
  for (int i = 0; i < n; ++i) diag[i] = i;
  Tensor<T> sims = similarity_matrix(video_feats, audio_feats, proj_v, proj_a);
  const T inv_tau = T(1) / tau;
  Tensor<T> v2a = cross_entropy_from_logits(scale(sims, inv_tau), diag);
  Tensor<T> a2v = cross_entropy_from_logits(scale(permute(sims, {1, 0}), inv_tau), diag);
  return add(v2a, a2v);
}

// ---------------------------------------------------------------------------
// proposal-set construction
// ---------------------------------------------------------------------------

struct ClipMeta {
  int video = 0;
  int viewpoint = 0;
  double time = 0.0;
};

struct NegativeFlags {
  bool spatial = false;
  bool temporal = false;
  double min_time_gap = 0.0;  // seconds, for temporal negatives
};

struct ProposalSet {
  std::vector<int> indices;  // positions in the batch feature bank
  int target_pos = -1;       // position of the positive within indices
};

// Candidate targets for one query clip. Always includes the instance-level
// set (the matching clip of every video); spatial adds every viewpoint at
// the query's time; temporal adds clips of the same video at other times,
// at least min_time_gap away.
inline ProposalSet build_proposals(const NegativeFlags& flags,
                                   const std::vector<ClipMeta>& metas, int query) {
  if (query < 0 || query >= static_cast<int>(metas.size()))
    throw ConfigError("build_proposals: query index out of range");
  const ClipMeta& q = metas[query];
  ProposalSet set;
  bool temporal_candidates = false;
  for (int i = 0; i < static_cast<int>(metas.size()); ++i) {
    const ClipMeta& m = metas[i];
    const bool same_time = m.time == q.time;
    bool include = false;
    if (same_time && m.viewpoint == q.viewpoint) include = true;  // instance level
    if (flags.spatial && same_time) include = true;
    if (flags.temporal && m.video == q.video && !same_time) {
      temporal_candidates = true;
      if (std::abs(m.time - q.time) >= flags.min_time_gap) include = true;
    }
    if (!include) continue;
    if (i == query) set.target_pos = static_cast<int>(set.indices.size());
    set.indices.push_back(i);
  }
  if (flags.temporal && !temporal_candidates)
    throw DataError("build_proposals: temporal negatives need multiple clips per video");
  if (set.target_pos < 0) throw DataError("build_proposals: target missing from proposals");
  return set;
}

// ---------------------------------------------------------------------------
// spatial-alignment loss
// ---------------------------------------------------------------------------

// Which proposals each query in an n-video, k-viewpoint batch sees.
enum class SpatialNegatives {
  kEasyOnly,  // matching viewpoint of every video
  kHardOnly,  // every viewpoint of the query's own video
  kBoth,      // every viewpoint of every video
};

inline std::vector<int> spatial_proposal_indices(SpatialNegatives mode, int n, int k,
                                                 int video, int viewpoint) {
  std::vector<int> idx;
  switch (mode) {
    case SpatialNegatives::kEasyOnly:
      for (int j = 0; j < n; ++j) idx.push_back(j * k + viewpoint);
      break;
    case SpatialNegatives::kHardOnly:
      for (int l = 0; l < k; ++l) idx.push_back(video * k + l);
      break;
    case SpatialNegatives::kBoth:
      for (int j = 0; j < n * k; ++j) idx.push_back(j);
      break;
  }
  return idx;
}

// Crop-level alignment loss over an n x k batch whose feature banks are
// ordered video-major: row i*k + l holds viewpoint l of video i. Features
// of each video pass through the translators; every translated feature is
// scored against same-modality encoder outputs, with the matching viewpoint
// as the positive. Sum over all queries and both directions.
template <typename T>
Tensor<T> avsa_loss(const Tensor<T>& video_feats, const Tensor<T>& audio_feats, int n,
                    int k, const Translator<T>& g_v2a, const Translator<T>& g_a2v,
                    const ProjectionHead<T>& proj_v, const ProjectionHead<T>& proj_a,
                    T tau, SpatialNegatives negatives = SpatialNegatives::kBoth) {
  if (video_feats.rank() != 2 || video_feats.shape() != audio_feats.shape())
    throw ShapeError("avsa_loss: feature banks must be matching [n*k, d]");
  if (n < 1 || k < 1 || video_feats.dim(0) != n * k)
    throw ShapeError("avsa_loss: bank size must be n*k");
  Tensor<T> loss = Tensor<T>::scalar(T(0));
  for (int i = 0; i < n; ++i) {
    std::vector<int> own(k);
    for (int l = 0; l < k; ++l) own[l] = i * k + l;
    Tensor<T> v_i = rows(video_feats, own);
    Tensor<T> a_i = rows(audio_feats, own);
    Tensor<T> a_translated = g_v2a.forward(v_i);  // audio-space predictions
    Tensor<T> v_translated = g_a2v.forward(a_i);  // video-space predictions
    for (int l = 0; l < k; ++l) {
      const std::vector<int> prop = spatial_proposal_indices(negatives, n, k, i, l);
      int target = -1;
      for (size_t p = 0; p < prop.size(); ++p)
        if (prop[p] == i * k + l) target = static_cast<int>(p);
      Tensor<T> v_query = rows(v_translated, {l});
      Tensor<T> a_query = rows(a_translated, {l});
      loss = add(loss, info_nce(v_query, rows(video_feats, prop), target, proj_v,
                                proj_v, tau));
      loss = add(loss, info_nce(a_query, rows(audio_feats, prop), target, proj_a,
                                proj_a, tau));
    }
  }
  return loss;
}

// Combine the K viewpoint features of one video by elementwise max.
template <typename T>
Tensor<T> maxpool_video_features(const Tensor<T>& feats) {
  if (feats.rank() != 2 || feats.dim(0) < 1)
    throw ShapeError("maxpool_video_features: expected [K, d] with K >= 1");
  Tensor<T> acc = rows(feats, {0});
  for (int i = 1; i < feats.dim(0); ++i)
    acc = elementwise_max(acc, rows(feats, {i}));
  return acc;
}

}  // namespace avsa
