#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ctqe {

using DenseVector = std::vector<double>;

struct DenseFusionWeights {
    double alpha_q = 0.5;
    double alpha_w = 0.1;
    double alpha_c = 0.1;
};

// token -> importance score; absent token means 0.
using SparseWeights = std::map<std::string, double>;

struct SparseFusionWeights {
    double beta_q = 0.5;
    double beta_w = 0.1;
    double beta_c = 0.1;
    // Candidate weight is zeroed for this many tokens already ranked highest
    // by the query+keyword components.
    int zero_top_n = 20;
};

// Elementwise alpha_q*v_q + alpha_w*v_w + alpha_c*v_c; no renormalization.
DenseVector fuse_dense(const DenseVector& v_q, const DenseVector& v_w, const DenseVector& v_c,
                       const DenseFusionWeights& w);

double dense_score(const DenseVector& v_ctqe, const DenseVector& v_d);

// The zeroing set T: the zero_top_n tokens with highest
// beta_q*ls_q(t) + beta_w*ls_w(t), ranked over the union of the q/w
// supports, ties by token string ascending. Independent of ls_c.
std::set<std::string> sparse_zero_set(const SparseWeights& ls_q, const SparseWeights& ls_w,
                                      const SparseFusionWeights& w);

SparseWeights fuse_sparse(const SparseWeights& ls_q, const SparseWeights& ls_w,
                          const SparseWeights& ls_c, const SparseFusionWeights& w);

// Sum over shared tokens of fused(t) * doc(t).
double sparse_score(const SparseWeights& fused, const SparseWeights& doc);

class Encoder {
public:
    virtual ~Encoder() = default;
    virtual DenseVector encode_dense(const std::string& text) = 0;
    virtual SparseWeights encode_sparse(const std::string& text) = 0;
    virtual int dense_dim() const = 0;
};

// Deterministic stand-in for a real query/document encoder: dense values
// from a seeded hash of (text, position), unit-normalized; sparse weights
// are non-negative hashed token buckets. encode_dense("") is the all-equal
// unit vector.
class HashEncoder : public Encoder {
public:
    explicit HashEncoder(std::uint64_t seed = 7, int dim = 32);

    DenseVector encode_dense(const std::string& text) override;
    SparseWeights encode_sparse(const std::string& text) override;
    int dense_dim() const override { return dim_; }

private:
    std::uint64_t seed_;
    int dim_;
};

// Process-external encoder speaking line-delimited JSON over the child's
// standard streams: request {"text": ...}, response {"dense": [...]} and/or
// {"sparse": {token: weight}}. Single-threaded; wrap calls in an external
// pool for concurrency.
class StreamEncoder : public Encoder {
public:
    explicit StreamEncoder(const std::vector<std::string>& command);
    ~StreamEncoder() override;

    StreamEncoder(const StreamEncoder&) = delete;
    StreamEncoder& operator=(const StreamEncoder&) = delete;

    DenseVector encode_dense(const std::string& text) override;
    SparseWeights encode_sparse(const std::string& text) override;
    int dense_dim() const override;

private:
    std::string roundtrip(const std::string& request_line);

    int child_pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string read_buffer_;
    mutable int dim_ = -1; // learned from the first dense response
};

} // namespace ctqe
