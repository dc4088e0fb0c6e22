#include "ctqe/fusion.hpp"

#include "ctqe/analysis.hpp"
#include "ctqe/errors.hpp"
#include "ctqe/llm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstring>
#include <sys/wait.h>
#include <unistd.h>

namespace ctqe {

using nlohmann::json;

DenseVector fuse_dense(const DenseVector& v_q, const DenseVector& v_w, const DenseVector& v_c,
                       const DenseFusionWeights& w) {
    if (v_q.size() != v_w.size() || v_q.size() != v_c.size())
        throw UsageError("fuse_dense: dimension mismatch");
    DenseVector out(v_q.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = w.alpha_q * v_q[i] + w.alpha_w * v_w[i] + w.alpha_c * v_c[i];
    return out;
}

double dense_score(const DenseVector& v_ctqe, const DenseVector& v_d) {
    if (v_ctqe.size() != v_d.size()) throw UsageError("dense_score: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v_ctqe.size(); ++i) s += v_ctqe[i] * v_d[i];
    return s;
}

namespace {

double weight_of(const SparseWeights& m, const std::string& token) {
    auto it = m.find(token);
    return it == m.end() ? 0.0 : it->second;
}

} // namespace

std::set<std::string> sparse_zero_set(const SparseWeights& ls_q, const SparseWeights& ls_w,
                                      const SparseFusionWeights& w) {
    if (w.zero_top_n < 0) throw UsageError("zero_top_n must be >= 0");
    std::vector<std::pair<std::string, double>> base;
    for (const auto& [t, v] : ls_q) base.emplace_back(t, w.beta_q * v + w.beta_w * weight_of(ls_w, t));
    for (const auto& [t, v] : ls_w)
        if (!ls_q.count(t)) base.emplace_back(t, w.beta_w * v);
    std::sort(base.begin(), base.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::set<std::string> top;
    for (std::size_t i = 0; i < base.size() && i < static_cast<std::size_t>(w.zero_top_n); ++i)
        top.insert(base[i].first);
    return top;
}

SparseWeights fuse_sparse(const SparseWeights& ls_q, const SparseWeights& ls_w,
                          const SparseWeights& ls_c, const SparseFusionWeights& w) {
    std::set<std::string> zeroed = sparse_zero_set(ls_q, ls_w, w);
    SparseWeights fused;
    auto add_tokens = [&fused](const SparseWeights& m) {
        for (const auto& [t, v] : m) fused.emplace(t, 0.0);
    };
    add_tokens(ls_q);
    add_tokens(ls_w);
    add_tokens(ls_c);
    for (auto& [t, v] : fused) {
        v = w.beta_q * weight_of(ls_q, t) + w.beta_w * weight_of(ls_w, t);
        if (!zeroed.count(t)) v += w.beta_c * weight_of(ls_c, t);
    }
    return fused;
}

double sparse_score(const SparseWeights& fused, const SparseWeights& doc) {
    // Walk the smaller map.
    const SparseWeights& small = fused.size() <= doc.size() ? fused : doc;
    const SparseWeights& large = fused.size() <= doc.size() ? doc : fused;
    double s = 0.0;
    for (const auto& [t, v] : small) {
        auto it = large.find(t);
        if (it != large.end()) s += v * it->second;
    }
    return s;
}

HashEncoder::HashEncoder(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {
    if (dim < 1) throw UsageError("encoder dim must be >= 1");
}

DenseVector HashEncoder::encode_dense(const std::string& text) {
    DenseVector v(dim_);
    if (text.empty()) {
        std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(dim_)));
        return v;
    }
    std::string key = std::to_string(seed_) + "\x1f" + text + "\x1f";
    double norm_sq = 0.0;
    for (int i = 0; i < dim_; ++i) {
        std::uint64_t h = fnv1a64(key + std::to_string(i));
        // top 53 bits -> [0,1) -> [-1,1)
        double u = static_cast<double>(h >> 11) / 9007199254740992.0;
        v[i] = 2.0 * u - 1.0;
        norm_sq += v[i] * v[i];
    }
    if (norm_sq < 1e-24) {
        std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(dim_)));
        return v;
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
    return v;
}

SparseWeights HashEncoder::encode_sparse(const std::string& text) {
    SparseWeights weights;
    AnalyzerConfig cfg;
    for (const auto& token : analyze(text, cfg)) {
        std::uint64_t hb = fnv1a64(std::to_string(seed_) + "\x1f" "b" "\x1f" + token);
        std::uint64_t hw = fnv1a64(std::to_string(seed_) + "\x1f" "w" "\x1f" + token);
        std::string bucket = "t" + std::to_string(hb % 1024);
        weights[bucket] += static_cast<double>(hw >> 11) / 9007199254740992.0;
    }
    return weights;
}

StreamEncoder::StreamEncoder(const std::vector<std::string>& command) {
    if (command.empty()) throw UsageError("external encoder command is empty");
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
        throw ProviderError("cannot create encoder pipes");
    pid_t pid = fork();
    if (pid < 0) throw ProviderError("cannot fork encoder process");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        std::vector<char*> argv;
        for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
        argv.push_back(nullptr);
        execvp(argv[0], argv.data());
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    child_pid_ = pid;
    to_child_ = to_child[1];
    from_child_ = from_child[0];
}

StreamEncoder::~StreamEncoder() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (child_pid_ > 0) {
        int status = 0;
        if (waitpid(child_pid_, &status, WNOHANG) == 0) {
            kill(child_pid_, SIGTERM);
            waitpid(child_pid_, &status, 0);
        }
    }
}

std::string StreamEncoder::roundtrip(const std::string& request_line) {
    std::string payload = request_line + "\n";
    std::size_t written = 0;
    while (written < payload.size()) {
        ssize_t n = write(to_child_, payload.data() + written, payload.size() - written);
        if (n <= 0) throw ProviderError("external encoder closed its input");
        written += static_cast<std::size_t>(n);
    }
    while (true) {
        auto nl = read_buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = read_buffer_.substr(0, nl);
            read_buffer_.erase(0, nl + 1);
            return line;
        }
        char buf[4096];
        ssize_t n = read(from_child_, buf, sizeof(buf));
        if (n <= 0) throw ProviderError("external encoder closed its output");
        read_buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

DenseVector StreamEncoder::encode_dense(const std::string& text) {
    json req = {{"text", text}};
    json res;
    try {
        res = json::parse(roundtrip(req.dump()));
    } catch (const json::exception& e) {
        throw ProviderError(std::string("external encoder sent malformed JSON: ") + e.what());
    }
    if (!res.contains("dense"))
        throw ProviderError("external encoder response has no \"dense\" field");
    DenseVector v = res.at("dense").get<DenseVector>();
    if (dim_ < 0) dim_ = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim_)
        throw ProviderError("external encoder changed its dense dimension");
    return v;
}

SparseWeights StreamEncoder::encode_sparse(const std::string& text) {
    json req = {{"text", text}};
    json res;
    try {
        res = json::parse(roundtrip(req.dump()));
    } catch (const json::exception& e) {
        throw ProviderError(std::string("external encoder sent malformed JSON: ") + e.what());
    }
    if (!res.contains("sparse"))
        throw ProviderError("external encoder response has no \"sparse\" field");
    return res.at("sparse").get<SparseWeights>();
}

int StreamEncoder::dense_dim() const {
    if (dim_ < 0)
        throw ProviderError("external encoder dimension unknown before first encode");
    return dim_;
}

} // namespace ctqe
