#include "shadownet/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "shadownet/error.hpp"
#include "shadownet/rng.hpp"

namespace shadownet {

namespace {

bool bits_equal(float a, float b) {
  return std::bit_cast<uint32_t>(a) == std::bit_cast<uint32_t>(b);
}

// Sorted k-subset of [0, m), drawn by partial shuffle.
std::vector<int> draw_subset(int m, int k, Rng& rng) {
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + int(rng.uniform_int(uint64_t(m - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> complement_of(const std::vector<int>& omega, int m) {
  std::vector<bool> taken(m, false);
  for (int p : omega) taken[p] = true;
  std::vector<int> rest;
  rest.reserve(m - int(omega.size()));
  for (int p = 0; p < m; ++p)
    if (!taken[p]) rest.push_back(p);
  return rest;
}

// A signed power of two inside [floor, bound]. Exponents are capped at 4, so
// with the default band the scalars land in [1/16, 1].
double draw_dyadic_scalar(const ObfuscationParams& prm, Rng& rng) {
  for (int tries = 0; tries < 64; ++tries) {
    int e = int(rng.uniform_int(5));
    double mag = std::ldexp(1.0, -e);
    if (mag < prm.scalar_floor || mag > prm.scalar_bound) continue;
    return (rng.next_u32() & 1) ? -mag : mag;
  }
  throw InvalidParams("scalar band admits no power of two in [1/16, 1]");
}

// Builds one candidate for `transformed`, or fails when a column cannot be
// reproduced exactly. Exactness can only break when the filler subtraction
// rounds, so a failed pairing is redrawn with a fresh filler and scalar.
std::optional<FeasiblePreimage> build_candidate(const TensorF& t, int n,
                                                const ObfuscationParams& prm,
                                                Rng& rng) {
  const int m = t.shape.n();
  const int k = m - n;
  const int kh = t.shape.kh(), kw = t.shape.kw(), cin = t.shape.cin();

  FeasiblePreimage p;
  p.witness.omega = draw_subset(m, k, rng);
  p.witness.sigma = complement_of(p.witness.omega, m);
  p.kernels = TensorD(Shape::filt(kh, kw, cin, n));
  p.witness.lambdas.resize(n);
  p.witness.mask_choice.resize(k > 0 ? n : 0);

  for (int i = 0; i < n; ++i) {
    const int pos = p.witness.sigma[i];
    bool done = false;
    for (int tries = 0; tries < 64 && !done; ++tries) {
      double lambda = draw_dyadic_scalar(prm, rng);
      int choice = k > 0 ? int(rng.uniform_int(uint64_t(k))) : -1;
      bool ok = true;
      for (int ky = 0; ky < kh && ok; ++ky)
        for (int kx = 0; kx < kw && ok; ++kx)
          for (int ci = 0; ci < cin && ok; ++ci) {
            double wv = t.at4(ky, kx, ci, pos);
            double fv =
                k > 0 ? double(t.at4(ky, kx, ci, p.witness.omega[choice])) : 0.0;
            double cand = (wv - fv) / lambda;
            float replay = k > 0
                               ? transformed_weight_element<float>(lambda, cand, fv)
                               : scaled_weight_element<float>(lambda, cand);
            if (!std::isfinite(cand) || !bits_equal(replay, t.at4(ky, kx, ci, pos))) {
              ok = false;
              break;
            }
            p.kernels.at4(ky, kx, ci, i) = cand;
          }
      if (ok) {
        p.witness.lambdas[i] = lambda;
        if (k > 0) p.witness.mask_choice[i] = choice;
        done = true;
      }
    }
    if (!done) return std::nullopt;
  }
  return p;
}

}  // namespace

std::vector<FeasiblePreimage> sample_preimages(const TensorF& transformed,
                                               int n, int count,
                                               const ObfuscationParams& prm,
                                               uint64_t seed) {
  if (transformed.shape.rank != 4)
    throw InvalidParams("sample_preimages needs a rank-4 filter bank");
  const int m = transformed.shape.n();
  if (n < 1 || n > m)
    throw InvalidParams("claimed kernel count outside [1, bank size]");
  if (count < 0) throw InvalidParams("negative sample count");

  Rng root(seed, 0xFEA5);
  std::vector<FeasiblePreimage> out;
  out.reserve(size_t(count));
  for (int s = 0; s < count; ++s) {
    bool placed = false;
    for (uint64_t attempt = 0; attempt < 64 && !placed; ++attempt) {
      Rng r = root.split(uint64_t(s)).split(attempt);
      auto cand = build_candidate(transformed, n, prm, r);
      if (!cand) continue;
      bool dup = false;
      for (const auto& prev : out)
        if (prev.witness == cand->witness) {
          dup = true;
          break;
        }
      if (dup) continue;
      out.push_back(std::move(*cand));
      placed = true;
    }
    if (!placed)
      throw Error("failed to sample a fresh exact preimage for this bank");
  }
  return out;
}

FeasiblePreimage true_preimage(const TensorF& original,
                               const ConvSecret<float>& s) {
  if (original.shape.rank != 4)
    throw InvalidParams("true_preimage needs a rank-4 filter bank");
  if (original.shape.n() != s.n)
    throw InvalidParams("kernel count does not match the secret");
  const int n = s.n, m = s.m, k = m - n;

  FeasiblePreimage p;
  p.witness.omega.reserve(k);
  for (int j = 0; j < k; ++j) p.witness.omega.push_back(s.perm[n + j]);
  std::sort(p.witness.omega.begin(), p.witness.omega.end());

  // Filler j landed at position perm[n + j]; record where that position sits
  // in the sorted bank the verifier reads back.
  std::vector<int> rank(m, -1);
  for (int j = 0; j < k; ++j) {
    auto it = std::lower_bound(p.witness.omega.begin(), p.witness.omega.end(),
                               s.perm[n + j]);
    rank[size_t(n + j)] = int(it - p.witness.omega.begin());
  }

  p.witness.sigma.resize(n);
  p.witness.lambdas = s.lambdas;
  p.witness.mask_choice.resize(k > 0 ? n : 0);
  for (int i = 0; i < n; ++i) {
    p.witness.sigma[i] = s.perm[i];
    if (k > 0) p.witness.mask_choice[i] = rank[size_t(n + s.index_c[i])];
  }

  p.kernels = TensorD(original.shape);
  for (size_t i = 0; i < original.v.size(); ++i)
    p.kernels.v[i] = double(original.v[i]);
  return p;
}

bool verify_preimage(const TensorF& transformed, const FeasiblePreimage& p,
                     const ObfuscationParams& prm) {
  if (transformed.shape.rank != 4 || p.kernels.shape.rank != 4) return false;
  const int m = transformed.shape.n();
  const int n = p.kernels.shape.n();
  const int k = m - n;
  if (k < 0) return false;
  if (p.kernels.shape.kh() != transformed.shape.kh() ||
      p.kernels.shape.kw() != transformed.shape.kw() ||
      p.kernels.shape.cin() != transformed.shape.cin())
    return false;

  const auto& w = p.witness;
  if (int(w.omega.size()) != k || int(w.sigma.size()) != n) return false;
  if (int(w.lambdas.size()) != n) return false;
  if (int(w.mask_choice.size()) != (k > 0 ? n : 0)) return false;

  std::vector<bool> seen(m, false);
  for (size_t j = 0; j < w.omega.size(); ++j) {
    int pos = w.omega[j];
    if (pos < 0 || pos >= m || seen[pos]) return false;
    if (j > 0 && w.omega[j - 1] >= pos) return false;
    seen[pos] = true;
  }
  for (int pos : w.sigma) {
    if (pos < 0 || pos >= m || seen[pos]) return false;
    seen[pos] = true;
  }

  for (double l : w.lambdas) {
    if (!std::isfinite(l)) return false;
    double mag = std::fabs(l);
    if (mag < prm.scalar_floor || mag > prm.scalar_bound) return false;
  }
  for (int c : w.mask_choice)
    if (c < 0 || c >= k) return false;

  const int kh = transformed.shape.kh(), kw = transformed.shape.kw();
  const int cin = transformed.shape.cin();
  for (int i = 0; i < n; ++i) {
    const int pos = w.sigma[i];
    const int fpos = k > 0 ? w.omega[size_t(w.mask_choice[i])] : -1;
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx)
        for (int ci = 0; ci < cin; ++ci) {
          double cand = p.kernels.at4(ky, kx, ci, i);
          float replay =
              k > 0 ? transformed_weight_element<float>(
                          w.lambdas[size_t(i)], cand,
                          double(transformed.at4(ky, kx, ci, fpos)))
                    : scaled_weight_element<float>(w.lambdas[size_t(i)], cand);
          if (!bits_equal(replay, transformed.at4(ky, kx, ci, pos)))
            return false;
        }
  }
  return true;
}

std::vector<DwPreimage> dw_sample_preimages(const TensorF& transformed,
                                            int count,
                                            const ObfuscationParams& prm,
                                            uint64_t seed) {
  if (transformed.shape.rank != 3)
    throw InvalidParams("dw_sample_preimages needs a rank-3 filter bank");
  if (count < 0) throw InvalidParams("negative sample count");
  const int n = transformed.shape.c();
  const int kh = transformed.shape.h(), kw = transformed.shape.w();

  Rng root(seed, 0xFEA6);
  std::vector<DwPreimage> out;
  out.reserve(size_t(count));
  for (int s = 0; s < count; ++s) {
    bool placed = false;
    for (uint64_t attempt = 0; attempt < 64 && !placed; ++attempt) {
      Rng r = root.split(uint64_t(s)).split(attempt);
      DwPreimage p;
      p.perm = r.permutation(n);
      p.lambdas.resize(n);
      p.kernels = TensorD(Shape::hwc(kh, kw, n));
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        double lambda = draw_dyadic_scalar(prm, r);
        p.lambdas[size_t(i)] = lambda;
        for (int ky = 0; ky < kh && ok; ++ky)
          for (int kx = 0; kx < kw && ok; ++kx) {
            double cand = double(transformed.at(ky, kx, p.perm[i])) / lambda;
            if (!std::isfinite(cand)) {
              ok = false;
              break;
            }
            p.kernels.at(ky, kx, i) = cand;
          }
      }
      if (!ok) continue;
      bool dup = false;
      for (const auto& prev : out)
        if (prev.perm == p.perm && prev.lambdas == p.lambdas) {
          dup = true;
          break;
        }
      if (dup) continue;
      out.push_back(std::move(p));
      placed = true;
    }
    if (!placed)
      throw Error("failed to sample a fresh exact depthwise preimage");
  }
  return out;
}

DwPreimage dw_true_preimage(const TensorF& original, const DwSecret<float>& s) {
  if (original.shape.rank != 3)
    throw InvalidParams("dw_true_preimage needs a rank-3 filter bank");
  if (original.shape.c() != s.n)
    throw InvalidParams("channel count does not match the secret");
  DwPreimage p;
  p.perm = s.perm;
  p.lambdas = s.lambdas;
  p.kernels = TensorD(original.shape);
  for (size_t i = 0; i < original.v.size(); ++i)
    p.kernels.v[i] = double(original.v[i]);
  return p;
}

bool dw_verify_preimage(const TensorF& transformed, const DwPreimage& p,
                        const ObfuscationParams& prm) {
  if (transformed.shape.rank != 3 || p.kernels.shape.rank != 3) return false;
  if (p.kernels.shape != transformed.shape) return false;
  const int n = transformed.shape.c();
  if (int(p.perm.size()) != n || int(p.lambdas.size()) != n) return false;

  std::vector<bool> seen(n, false);
  for (int pos : p.perm) {
    if (pos < 0 || pos >= n || seen[pos]) return false;
    seen[pos] = true;
  }
  for (double l : p.lambdas) {
    if (!std::isfinite(l)) return false;
    double mag = std::fabs(l);
    if (mag < prm.scalar_floor || mag > prm.scalar_bound) return false;
  }

  const int kh = transformed.shape.h(), kw = transformed.shape.w();
  for (int i = 0; i < n; ++i)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        float replay = scaled_weight_element<float>(p.lambdas[size_t(i)],
                                                    p.kernels.at(ky, kx, i));
        if (!bits_equal(replay, transformed.at(ky, kx, p.perm[i]))) return false;
      }
  return true;
}

uint64_t witness_class_count(int m, int k) {
  if (m < 0 || k < 0 || k > m) throw InvalidParams("binomial outside range");
  k = std::min(k, m - k);
  unsigned __int128 c = 1;
  for (int i = 1; i <= k; ++i) {
    c = c * unsigned(m - k + i) / unsigned(i);
    if (c > (unsigned __int128)std::numeric_limits<uint64_t>::max())
      throw Error("witness class count exceeds 64 bits");
  }
  return uint64_t(c);
}

ParamCounts count_equivalent_params(const ModelGraph& g, double ratio) {
  ParamCounts out;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerSpec& node = g.nodes[i];
    if (!is_outsourced_kind(node.kind)) continue;
    const TensorF& w = g.weights.at(size_t(node.weights));
    uint64_t n, m;
    if (node.kind == LayerKind::dwconv) {
      n = uint64_t(w.shape.c());
      m = n;
    } else {
      n = uint64_t(w.shape.n());
      m = uint64_t(expanded_kernel_count(int(n), ratio));
    }
    bool bn_follows = false;
    for (const LayerSpec& other : g.nodes)
      if (other.kind == LayerKind::batchnorm && !other.inputs.empty() &&
          other.inputs[0] == int(i))
        bn_follows = true;
    out.victim += uint64_t(w.count()) + (bn_follows ? 4 * n : 0);
    out.adversary += m * n + (bn_follows ? 4 * n : 0);
  }
  return out;
}

AuditReport audit_view(const AdversaryView& view, const ModelGraph& original,
                       double mask_threshold) {
  AuditReport rep;
  std::vector<TensorF> clean = eval_all(original, view.input);
  double min_eta = std::numeric_limits<double>::infinity();
  bool any_masked = false;

  for (const BoundaryRecord& rec : view.records) {
    int id = original.find_node(rec.layer);
    if (id < 0)
      throw InvalidParams("boundary record for unknown layer " + rec.layer);
    const LayerSpec& node = original.nodes[size_t(id)];
    const TensorF& clean_in =
        node.inputs[0] < 0 ? view.input : clean[size_t(node.inputs[0])];

    AuditRow row;
    row.layer = rec.layer;
    row.masked = rec.masked;
    row.equations = uint64_t(rec.tensor.count());
    uint64_t wcount =
        node.weights >= 0
            ? uint64_t(original.weights.at(size_t(node.weights)).count())
            : 0;
    row.unknowns = 2 * row.equations + wcount;
    if (rec.tensor.shape == clean_in.shape)
      row.eta = rel_error(rec.tensor, clean_in);
    else
      row.eta = std::numeric_limits<double>::infinity();

    if (rec.masked) {
      any_masked = true;
      min_eta = std::min(min_eta, row.eta);
      if (!(row.eta > mask_threshold)) rep.masked_ok = false;
    } else if (!(rec.tensor.shape == clean_in.shape) ||
               !bitwise_equal(rec.tensor, clean_in)) {
      rep.unmasked_ok = false;
    }
    rep.rows.push_back(std::move(row));
  }
  rep.min_masked_eta = any_masked ? min_eta : 0.0;

  for (const auto& entry : view.weights) {
    int id = original.find_node(entry.first);
    if (id < 0)
      throw InvalidParams("published weights for unknown layer " + entry.first);
    const LayerSpec& node = original.nodes[size_t(id)];
    const TensorF& w = original.weights.at(size_t(node.weights));
    const TensorF& t = entry.second;
    if (node.kind == LayerKind::dwconv) {
      const int kh = w.shape.h(), kw = w.shape.w();
      for (int i = 0; i < w.shape.c(); ++i)
        for (int q = 0; q < t.shape.c(); ++q) {
          bool same = true;
          for (int ky = 0; ky < kh && same; ++ky)
            for (int kx = 0; kx < kw && same; ++kx)
              same = bits_equal(w.at(ky, kx, i), t.at(ky, kx, q));
          if (same) rep.verbatim_ok = false;
        }
    } else {
      const int kh = w.shape.kh(), kw = w.shape.kw(), cin = w.shape.cin();
      for (int i = 0; i < w.shape.n(); ++i)
        for (int q = 0; q < t.shape.n(); ++q) {
          bool same = true;
          for (int ky = 0; ky < kh && same; ++ky)
            for (int kx = 0; kx < kw && same; ++kx)
              for (int ci = 0; ci < cin && same; ++ci)
                same = bits_equal(w.at4(ky, kx, ci, i), t.at4(ky, kx, ci, q));
          if (same) rep.verbatim_ok = false;
        }
    }
  }
  return rep;
}

}  // namespace shadownet
