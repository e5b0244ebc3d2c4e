#pragma once

// TF-IDF weighting and Latent Semantic Analysis. The TF-IDF variant is
// pinned: idf(t) = ln((1 + N) / (1 + df(t))) + 1, document vectors
// L2-normalized. LSA folds documents into the latent space with
// U_k Sigma_k^{-1}, so a training document reproduces its row of V_k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cota/common.hpp"
#include "cota/svd.hpp"
#include "cota/textprep.hpp"

namespace cota::vectorize {

using textprep::BagOfWords;
using textprep::Dictionary;

// (index, weight) pairs with strictly increasing indices, no zeros.
struct SparseVector {
  std::vector<std::pair<int, double>> entries;

  double norm() const {
    double total = 0;
    for (const auto& [i, w] : entries) total += w * w;
    return std::sqrt(total);
  }
  bool empty() const { return entries.empty(); }
};

inline double dot(const SparseVector& a, const SparseVector& b) {
  double total = 0;
  std::size_t i = 0, j = 0;
  while (i < a.entries.size() && j < b.entries.size()) {
    if (a.entries[i].first < b.entries[j].first) ++i;
    else if (a.entries[i].first > b.entries[j].first) ++j;
    else total += a.entries[i++].second * b.entries[j++].second;
  }
  return total;
}

struct TfIdfModel {
  Dictionary dictionary;
  std::vector<double> idf;  // per term, finite and >= 0
  int document_count = 0;
};

inline TfIdfModel fit_tfidf(const std::vector<BagOfWords>& docs,
                            const Dictionary& dictionary) {
  if (docs.empty()) throw DataError("fit_tfidf: empty corpus");
  TfIdfModel model;
  model.dictionary = dictionary;
  model.document_count = int(docs.size());
  std::vector<int> df(std::size_t(dictionary.size()), 0);
  for (const auto& doc : docs) {
    for (const auto& [term, count] : doc) {
      if (count <= 0) continue;
      const int index = dictionary.lookup(term);
      if (index >= 0) ++df[std::size_t(index)];
    }
  }
  model.idf.resize(std::size_t(dictionary.size()));
  const double n = double(docs.size());
  for (int t = 0; t < dictionary.size(); ++t)
    model.idf[std::size_t(t)] = std::log((1.0 + n) / (1.0 + df[std::size_t(t)])) + 1.0;
  return model;
}

// tf * idf, L2-normalized. Out-of-vocabulary terms are ignored; an all-OOV
// document yields an empty vector.
inline SparseVector transform_tfidf(const TfIdfModel& model, const BagOfWords& doc) {
  SparseVector vec;
  for (const auto& [term, count] : doc) {
    if (count <= 0) continue;
    const int index = model.dictionary.lookup(term);
    if (index < 0) continue;
    const double weight = double(count) * model.idf[std::size_t(index)];
    if (weight != 0.0) vec.entries.emplace_back(index, weight);
  }
  std::sort(vec.entries.begin(), vec.entries.end());
  const double norm = vec.norm();
  if (norm > 0) {
    for (auto& [i, w] : vec.entries) w /= norm;
  }
  return vec;
}

struct LsaModel {
  int k = 0;
  int vocab_size = 0;
  linalg::Matrix<double> term_factors;   // vocab x k, U_k Sigma_k^{-1}
  std::vector<double> singular_values;   // length k, nonincreasing, > 0
  double variance_retained = 0.0;
};

using LsaVector = std::vector<double>;  // dense, length k

struct LsaOptions {
  double variance_threshold = 0.9;
  int max_k = 200;
  int oversample = 10;
  int power_iters = 4;
  std::uint64_t seed = 0;
};

// Truncated SVD of the term-document matrix (terms x documents, documents
// as columns).
inline LsaModel fit_lsa(const std::vector<SparseVector>& docs, int vocab_size,
                        const LsaOptions& options) {
  if (docs.size() < 2) throw DataError("fit_lsa: need at least 2 documents");
  if (vocab_size < 1) throw DataError("fit_lsa: empty vocabulary");
  svd::CscMatrix matrix;
  matrix.row_count = vocab_size;
  matrix.columns.reserve(docs.size());
  for (const auto& doc : docs) {
    auto& column = matrix.columns.emplace_back();
    column.reserve(doc.entries.size());
    for (const auto& [index, weight] : doc.entries) {
      if (index < 0 || index >= vocab_size)
        throw DataError("fit_lsa: sparse index outside vocabulary");
      column.emplace_back(index, weight);
    }
  }
  svd::TruncatedSvd truncated = svd::truncated_svd_by_variance(
      matrix, options.variance_threshold, options.max_k, options.oversample,
      options.power_iters, options.seed);

  LsaModel model;
  model.k = truncated.k;
  model.vocab_size = vocab_size;
  model.singular_values = truncated.factors.singular_values;
  model.variance_retained = truncated.variance_retained;
  model.term_factors = linalg::Matrix<double>(vocab_size, model.k);
  for (int r = 0; r < vocab_size; ++r)
    for (int c = 0; c < model.k; ++c)
      model.term_factors.at(r, c) =
          truncated.factors.u.at(r, c) / model.singular_values[std::size_t(c)];
  return model;
}

inline LsaVector project_lsa(const LsaModel& model, const SparseVector& vec) {
  LsaVector out(std::size_t(model.k), 0.0);
  for (const auto& [index, weight] : vec.entries) {
    if (index >= model.vocab_size) throw DataError("project_lsa: index out of range");
    const double* row = &model.term_factors.data[std::size_t(index) * std::size_t(model.k)];
    for (int c = 0; c < model.k; ++c) out[std::size_t(c)] += weight * row[c];
  }
  return out;
}

// Per retained dimension, the top_n terms by absolute factor weight.
inline std::vector<std::vector<std::pair<std::string, double>>> lsa_topics(
    const LsaModel& model, const Dictionary& dictionary, int top_n) {
  if (top_n < 1) throw UsageError("lsa_topics: top_n must be >= 1");
  std::vector<std::vector<std::pair<std::string, double>>> topics;
  topics.reserve(std::size_t(model.k));
  for (int c = 0; c < model.k; ++c) {
    std::vector<std::pair<double, int>> weighted;
    weighted.reserve(std::size_t(model.vocab_size));
    for (int r = 0; r < model.vocab_size; ++r)
      weighted.emplace_back(std::abs(model.term_factors.at(r, c)), r);
    std::sort(weighted.begin(), weighted.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const int take = std::min(top_n, int(weighted.size()));
    auto& topic = topics.emplace_back();
    topic.reserve(std::size_t(take));
    for (int i = 0; i < take; ++i) {
      const int term = weighted[std::size_t(i)].second;
      topic.emplace_back(dictionary.terms[std::size_t(term)],
                         model.term_factors.at(term, c));
    }
  }
  return topics;
}

// --- Serialization -------------------------------------------------------
// Binary layout: magic "COTALSA\n", version byte, then int64 k / vocab,
// float64 little-endian singular values, variance, and the factor matrix.
// A text sidecar of singular values is written next to the binary file.

namespace detail {

inline void put_u64(std::string& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) out += char((value >> (8 * i)) & 0xFF);
}

inline std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw DataError("lsa model: truncated file");
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i)
    value |= std::uint64_t(static_cast<unsigned char>(in[pos + std::size_t(i)])) << (8 * i);
  pos += 8;
  return value;
}

inline void put_f64(std::string& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  put_u64(out, bits);
}

inline double get_f64(const std::string& in, std::size_t& pos) {
  const std::uint64_t bits = get_u64(in, pos);
  double value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace detail

inline std::string serialize_lsa(const LsaModel& model) {
  std::string out = "COTALSA\n";
  out += char(1);  // version
  detail::put_u64(out, std::uint64_t(model.k));
  detail::put_u64(out, std::uint64_t(model.vocab_size));
  detail::put_f64(out, model.variance_retained);
  for (double s : model.singular_values) detail::put_f64(out, s);
  for (double v : model.term_factors.data) detail::put_f64(out, v);
  return out;
}

inline LsaModel parse_lsa(const std::string& bytes) {
  if (bytes.size() < 9 || bytes.compare(0, 8, "COTALSA\n") != 0)
    throw DataError("lsa model: bad magic");
  if (bytes[8] != char(1)) throw DataError("lsa model: unsupported version");
  std::size_t pos = 9;
  LsaModel model;
  model.k = int(detail::get_u64(bytes, pos));
  model.vocab_size = int(detail::get_u64(bytes, pos));
  model.variance_retained = detail::get_f64(bytes, pos);
  model.singular_values.resize(std::size_t(model.k));
  for (double& s : model.singular_values) s = detail::get_f64(bytes, pos);
  model.term_factors = linalg::Matrix<double>(model.vocab_size, model.k);
  for (double& v : model.term_factors.data) v = detail::get_f64(bytes, pos);
  return model;
}

inline void save_lsa(const LsaModel& model, const std::string& path) {
  write_file(path, serialize_lsa(model));
  std::string sidecar;
  for (std::size_t i = 0; i < model.singular_values.size(); ++i) {
    sidecar += format_double(model.singular_values[i]);
    sidecar += '\n';
  }
  write_file(path + ".sigma.txt", sidecar);
}

inline LsaModel load_lsa(const std::string& path) { return parse_lsa(read_file(path)); }

}  // namespace cota::vectorize
