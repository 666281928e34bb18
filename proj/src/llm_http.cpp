#include "canontab/llm.hpp"

#ifdef CANONTAB_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace canontab {

using nlohmann::json;

HttpProvider::HttpProvider(std::string base_url, std::string api_key, std::string model)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), model_(std::move(model)) {}

Completion HttpProvider::complete(const std::string& prompt, const StageConfig& cfg) {
    httplib::Client client(base_url_);
    if (!client.is_valid()) {
        throw ProviderError("provider endpoint '" + base_url_ +
                                "' is not usable in this build (https needs OpenSSL)",
                            false);
    }
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(120, 0);
    client.set_bearer_token_auth(api_key_);

    const json body{
        {"model", model_},
        {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", cfg.temperature},
        {"max_tokens", cfg.max_output_tokens},
    };
    httplib::Result res = client.Post("/v1/chat/completions", body.dump(), "application/json");
    if (!res) {
        throw ProviderError("transport error: " + httplib::to_string(res.error()), true);
    }
    if (res->status != 200) {
        const bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
        throw ProviderError(
            "provider returned HTTP " + std::to_string(res->status) + ": " +
                res->body.substr(0, 200),
            transient);
    }

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ProviderError(std::string("provider reply is not JSON: ") + e.what(), false);
    }
    Completion out;
    try {
        out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError("provider reply is missing choices[0].message.content", false);
    }
    if (reply.contains("usage") && reply["usage"].is_object()) {
        out.input_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
        out.output_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
    } else {
        out.input_tokens = approximate_tokens(prompt);
        out.output_tokens = approximate_tokens(out.text);
    }
    return out;
}

}  // namespace canontab
