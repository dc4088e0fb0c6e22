#include "ctqe/config.hpp"

#include "ctqe/errors.hpp"
#include "ctqe/expansion.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace ctqe {

using nlohmann::json;

void PipelineConfig::validate() const {
    if (retriever != "bm25" && retriever != "dense" && retriever != "sparse")
        throw UsageError("unknown retriever: " + retriever);
    if (alpha < 0.0 || alpha > 1.0) throw UsageError("alpha must be in [0, 1]");
    if (repetition_factor < 1) throw UsageError("repetition factor must be >= 1");
    filter_mode_from_string(mode); // throws on unknown mode
    if (top_k < 1) throw UsageError("top_k must be >= 1");
    if (max_tokens < 1) throw UsageError("max_tokens must be >= 1");
    if (temperature < 0.0) throw UsageError("temperature must be >= 0");
    if (top_k_alternates < 1 || top_k_alternates > 20)
        throw UsageError("top_k_alternates must be in [1, 20]");
    if (prf_depth < 1) throw UsageError("prf_depth must be >= 1");
    if (prf_max_tokens < 1) throw UsageError("prf_max_tokens must be >= 1");
    if (alpha_q < 0 || alpha_w < 0 || alpha_c < 0)
        throw UsageError("dense fusion weights must be >= 0");
    if (alpha_q + alpha_w + alpha_c <= 0.0)
        throw UsageError("at least one dense fusion weight must be > 0");
    if (beta_q < 0 || beta_w < 0 || beta_c < 0)
        throw UsageError("sparse fusion weights must be >= 0");
    if (zero_top_n < 0) throw UsageError("zero_top_n must be >= 0");
    if (k1 < 0) throw UsageError("bm25 k1 must be >= 0");
    if (b < 0 || b > 1) throw UsageError("bm25 b must be in [0, 1]");
    if (provider != "mock" && provider != "http")
        throw UsageError("unknown provider: " + provider);
    if (encoder_dim < 1) throw UsageError("encoder_dim must be >= 1");
}

json PipelineConfig::to_json() const {
    return json{{"retriever", retriever},
                {"alpha", alpha},
                {"repetition_factor", repetition_factor},
                {"mode", mode},
                {"top_k", top_k},
                {"drop_expansion_duplicates", drop_expansion_duplicates},
                {"per_channel_limit", per_channel_limit},
                {"max_tokens", max_tokens},
                {"temperature", temperature},
                {"top_k_alternates", top_k_alternates},
                {"prf", prf},
                {"prf_depth", prf_depth},
                {"prf_max_tokens", prf_max_tokens},
                {"alpha_q", alpha_q},
                {"alpha_w", alpha_w},
                {"alpha_c", alpha_c},
                {"beta_q", beta_q},
                {"beta_w", beta_w},
                {"beta_c", beta_c},
                {"zero_top_n", zero_top_n},
                {"k1", k1},
                {"b", b},
                {"provider", provider},
                {"mock_script", mock_script},
                {"http_base_url", http_base_url},
                {"http_model", http_model},
                {"api_key_env", api_key_env},
                {"cache_dir", cache_dir},
                {"encoder_seed", encoder_seed},
                {"encoder_dim", encoder_dim},
                {"encoder_cmd", encoder_cmd},
                {"word_index", word_index},
                {"subword_index", subword_index},
                {"vocab", vocab},
                {"corpus", corpus}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig cfg;
    if (!j.is_object()) throw DataError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "retriever") cfg.retriever = value.get<std::string>();
            else if (key == "alpha") cfg.alpha = value.get<double>();
            else if (key == "repetition_factor") cfg.repetition_factor = value.get<int>();
            else if (key == "mode") cfg.mode = value.get<std::string>();
            else if (key == "top_k") cfg.top_k = value.get<int>();
            else if (key == "drop_expansion_duplicates") cfg.drop_expansion_duplicates = value.get<bool>();
            else if (key == "per_channel_limit") cfg.per_channel_limit = value.get<int>();
            else if (key == "max_tokens") cfg.max_tokens = value.get<int>();
            else if (key == "temperature") cfg.temperature = value.get<double>();
            else if (key == "top_k_alternates") cfg.top_k_alternates = value.get<int>();
            else if (key == "prf") cfg.prf = value.get<bool>();
            else if (key == "prf_depth") cfg.prf_depth = value.get<int>();
            else if (key == "prf_max_tokens") cfg.prf_max_tokens = value.get<int>();
            else if (key == "alpha_q") cfg.alpha_q = value.get<double>();
            else if (key == "alpha_w") cfg.alpha_w = value.get<double>();
            else if (key == "alpha_c") cfg.alpha_c = value.get<double>();
            else if (key == "beta_q") cfg.beta_q = value.get<double>();
            else if (key == "beta_w") cfg.beta_w = value.get<double>();
            else if (key == "beta_c") cfg.beta_c = value.get<double>();
            else if (key == "zero_top_n") cfg.zero_top_n = value.get<int>();
            else if (key == "k1") cfg.k1 = value.get<double>();
            else if (key == "b") cfg.b = value.get<double>();
            else if (key == "provider") cfg.provider = value.get<std::string>();
            else if (key == "mock_script") cfg.mock_script = value.get<std::string>();
            else if (key == "http_base_url") cfg.http_base_url = value.get<std::string>();
            else if (key == "http_model") cfg.http_model = value.get<std::string>();
            else if (key == "api_key_env") cfg.api_key_env = value.get<std::string>();
            else if (key == "cache_dir") cfg.cache_dir = value.get<std::string>();
            else if (key == "encoder_seed") cfg.encoder_seed = value.get<std::uint64_t>();
            else if (key == "encoder_dim") cfg.encoder_dim = value.get<int>();
            else if (key == "encoder_cmd") cfg.encoder_cmd = value.get<std::vector<std::string>>();
            else if (key == "word_index") cfg.word_index = value.get<std::string>();
            else if (key == "subword_index") cfg.subword_index = value.get<std::string>();
            else if (key == "vocab") cfg.vocab = value.get<std::string>();
            else if (key == "corpus") cfg.corpus = value.get<std::string>();
            else throw DataError("unknown config key: " + key);
        } catch (const json::exception& e) {
            throw DataError("config key \"" + key + "\": " + e.what());
        }
    }
    return cfg;
}

PipelineConfig PipelineConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed config " + path + ": " + e.what());
    }
    return from_json(j);
}

} // namespace ctqe
