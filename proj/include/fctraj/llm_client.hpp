#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "fctraj/errors.hpp"

namespace fctraj {

struct chat_message {
    std::string role;  // system|user|assistant|tool
    std::string content;
    bool operator==(const chat_message&) const = default;
};

struct chat_params {
    std::string model;
    double temperature = 1.0;
    int max_tokens = 1024;
    uint64_t seed = 0;  // honored by deterministic mocks; forwarded by HTTP
};

class chat_backend {
public:
    virtual ~chat_backend() = default;
    virtual std::string complete(const std::vector<chat_message>& messages,
                                 const chat_params& params) = 0;
};

enum class template_id {
    nested_judge,
    dependency_judge,
    domain_classify,
    back_translate,
    forth_translate,
    positive_distill,
    negative_judge,
    system_prompt,
};

constexpr size_t template_count = 8;

const std::vector<template_id>& all_template_ids();
std::string_view template_name(template_id id);
// The pinned template body, with {placeholder} slots.
const std::string& template_text(template_id id);
// Placeholder names a template requires, in order of appearance.
std::vector<std::string> template_placeholders(template_id id);
// FNV-1a 64 checksum of the template body, lowercase hex.
std::string template_checksum(template_id id);

// Substitutes every {name} slot. Throws validation_error on an unbound
// placeholder or an unused binding. system_prompt renders with role
// "system"; everything else renders as a single "user" message.
std::vector<chat_message> render(template_id id,
                                 const std::map<std::string, std::string>& bindings);

// First non-empty line must be yes/no (any case); returns the flag and the
// remaining text. Throws protocol_error otherwise.
std::pair<bool, std::string> parse_yes_no_line(const std::string& text);

struct retry_policy {
    int max_retries = 2;
    std::chrono::milliseconds base_backoff{100};  // doubled per attempt; 0 in tests
};

// Bounds in-flight backend calls across threads.
class request_gate {
public:
    explicit request_gate(size_t limit);
    void acquire();
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    size_t limit_;
    size_t in_flight_ = 0;
};

// Runs complete() with bounded retries and exponential backoff, holding the
// gate slot (when given) for the duration of each attempt. Throws
// transport_error with an attempt log once retries are exhausted.
std::string complete_with_retry(chat_backend& backend, const std::vector<chat_message>& messages,
                                const chat_params& params, const retry_policy& policy = {},
                                request_gate* gate = nullptr);

// Deterministic test double: pops canned responses in order.
class replay_chat_backend final : public chat_backend {
public:
    explicit replay_chat_backend(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}
    std::string complete(const std::vector<chat_message>& messages,
                         const chat_params& params) override;
    size_t calls() const { return next_.load(); }

private:
    std::vector<std::string> responses_;
    std::atomic<size_t> next_{0};
};

// Deterministic test double driven by an arbitrary rule.
class rule_chat_backend final : public chat_backend {
public:
    using rule_fn =
        std::function<std::string(const std::vector<chat_message>&, const chat_params&)>;
    explicit rule_chat_backend(rule_fn rule) : rule_(std::move(rule)) {}
    std::string complete(const std::vector<chat_message>& messages,
                         const chat_params& params) override {
        return rule_(messages, params);
    }

private:
    rule_fn rule_;
};

struct http_backend_config {
    std::string host;                 // e.g. "api.example.com" or "127.0.0.1"
    int port = 443;
    std::string path = "/v1/chat/completions";
    bool use_tls = true;
    std::string model;
    std::string token_env = "FCTRAJ_API_TOKEN";  // credentials come from the env only
    std::chrono::seconds timeout{60};
};

// JSON chat-completion transport (request: {model, messages, temperature,
// max_tokens}; response: choices[0].message.content).
class http_chat_backend final : public chat_backend {
public:
    explicit http_chat_backend(http_backend_config config);
    std::string complete(const std::vector<chat_message>& messages,
                         const chat_params& params) override;

private:
    http_backend_config config_;
};

}  // namespace fctraj
