#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "treeseg/common.hpp"
#include "treeseg/embedding.hpp"

namespace treeseg {

struct HttpResponse {
    int status = 0;     // 0 means the request never completed
    std::string body;
    std::string error;  // transport-level failure description
};

// POSTs a JSON body and returns the response. Injectable so the retry and
// ordering logic can be exercised without sockets.
using HttpTransport = std::function<HttpResponse(const std::string& url,
                                                 const std::string& api_key,
                                                 const std::string& body)>;

inline HttpTransport default_http_transport() {
    return [](const std::string& url, const std::string& api_key,
              const std::string& body) -> HttpResponse {
        size_t scheme_end = url.find("://");
        if (scheme_end == std::string::npos)
            return {0, "", "endpoint URL has no scheme: " + url};
        size_t path_start = url.find('/', scheme_end + 3);
        std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(base);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        httplib::Result res = client.Post(path, headers, body, "application/json");
        if (!res) return {0, "", httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    };
}

struct RemoteConfig {
    std::string url;
    std::string model_id;
    std::string api_key;   // usually from TREESEG_EMBED_KEY
    int max_retries = 3;   // additional attempts after the first
    int backoff_ms = 100;  // doubles per retry
};

// Client for the embeddings wire contract:
//   POST {"model": str, "input": [str]}
//   ->   {"data": [{"index": int, "embedding": [float]}]}
// Vectors are restored to request order by index. Transient failures
// (transport errors, 5xx, 429) are retried with exponential backoff; auth
// failures are fatal immediately.
class RemoteEmbeddingBackend : public EmbeddingBackend {
public:
    explicit RemoteEmbeddingBackend(RemoteConfig cfg, HttpTransport transport = {})
        : cfg_(std::move(cfg)),
          transport_(transport ? std::move(transport) : default_http_transport()) {
        if (cfg_.url.empty()) throw ConfigError("remote backend needs an endpoint URL");
        if (cfg_.model_id.empty()) throw ConfigError("remote backend needs a model id");
    }

    std::string model_id() const override { return cfg_.model_id; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) return {};
        nlohmann::json payload;
        payload["model"] = cfg_.model_id;
        payload["input"] = texts;
        const std::string body = payload.dump();

        HttpResponse res;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(static_cast<long>(cfg_.backoff_ms) << (attempt - 1)));
            res = transport_(cfg_.url, cfg_.api_key, body);
            if (res.status == 401 || res.status == 403)
                throw ConfigError("embeddings endpoint rejected credentials (HTTP " +
                                  std::to_string(res.status) + ")");
            if (res.status == 200) return parse_response(res.body, texts.size());
            bool transient = res.status == 0 || res.status == 429 || res.status >= 500;
            if (!transient)
                throw BackendError("embeddings endpoint returned HTTP " +
                                   std::to_string(res.status) + ": " + res.body);
        }
        std::string reason = res.status == 0 ? res.error : "HTTP " + std::to_string(res.status);
        throw BackendError("embeddings request failed after " +
                           std::to_string(cfg_.max_retries + 1) + " attempts (" + reason + ")");
    }

private:
    static std::vector<std::vector<double>> parse_response(const std::string& body, size_t n) {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw BackendError("embeddings response is not valid JSON");
        if (!j.contains("data") || !j["data"].is_array())
            throw BackendError("embeddings response has no data array");
        std::vector<std::vector<double>> out(n);
        std::vector<bool> seen(n, false);
        for (const nlohmann::json& item : j["data"]) {
            int index;
            std::vector<double> vec;
            try {
                index = item.at("index").get<int>();
                vec = item.at("embedding").get<std::vector<double>>();
            } catch (const nlohmann::json::exception& e) {
                throw BackendError(std::string("bad embeddings response item: ") + e.what());
            }
            if (index < 0 || static_cast<size_t>(index) >= n || seen[static_cast<size_t>(index)])
                throw BackendError("embeddings response has duplicate or out-of-range index " +
                                   std::to_string(index));
            seen[static_cast<size_t>(index)] = true;
            out[static_cast<size_t>(index)] = std::move(vec);
        }
        for (size_t i = 0; i < n; ++i)
            if (!seen[i])
                throw BackendError("embeddings response is missing index " + std::to_string(i));
        return out;
    }

    RemoteConfig cfg_;
    HttpTransport transport_;
};

}  // namespace treeseg
