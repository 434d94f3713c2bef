#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kppo {

enum class ModelRole { optimizer, target };

std::string to_string(ModelRole role);
ModelRole role_from_string(const std::string& s);

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    ModelRole role = ModelRole::target;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;
    int max_output = 1024;

    // Greedy decoding or a pinned seed; such requests may be served from cache.
    bool deterministic() const noexcept { return temperature == 0.0 || seed.has_value(); }
    void validate() const;
};

// Stable digest of (role, messages, temperature, seed, max_output).
std::string request_digest(const ChatRequest& req);

struct Usage {
    std::size_t input = 0;
    std::size_t output = 0;
    std::size_t total() const noexcept { return input + output; }
    friend bool operator==(const Usage&, const Usage&) = default;
};

enum class ResponseSource { http, scripted, cache };

std::string to_string(ResponseSource source);
ResponseSource source_from_string(const std::string& s);

struct ChatResponse {
    std::string text;
    Usage usage;
    ResponseSource source = ResponseSource::scripted;
};

class ChatAdapter {
public:
    virtual ~ChatAdapter() = default;
    // Throws TransientError for retryable failures, GatewayError for
    // non-retryable statuses, ProtocolError for unreadable replies.
    virtual ChatResponse send(const ChatRequest& req) = 0;
};

// Offline adapter: replies looked up by request digest, falling back to an
// optional responder function. Pure function of the request.
class ScriptedAdapter : public ChatAdapter {
public:
    using Responder = std::function<std::optional<std::string>(const ChatRequest&)>;

    explicit ScriptedAdapter(Responder responder = {});

    void add(const std::string& digest, std::string text);
    void add(const ChatRequest& req, std::string text) { add(request_digest(req), std::move(text)); }
    // JSONL of {"digest": ..., "text": ...}.
    void load_script(const std::filesystem::path& path);

    ChatResponse send(const ChatRequest& req) override;

private:
    std::unordered_map<std::string, std::string> table_;
    Responder responder_;
};

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{8000};

    std::chrono::milliseconds delay_for(int attempt) const;
};

struct CachedResponse {
    std::string digest;
    std::string text;
    Usage usage;
};

// Persistent reply cache for deterministic requests. Entries keep insertion order.
class ResponseCache {
public:
    std::optional<CachedResponse> lookup(const std::string& digest) const;
    void insert(CachedResponse entry);
    std::size_t size() const;
    // Orders entries from `first` on by digest, so concurrent inserts persist
    // in a reproducible order.
    void sort_from(std::size_t first);

    // Loads at most `limit` entries from a JSONL file (missing file = empty).
    void load(const std::filesystem::path& path, std::optional<std::size_t> limit = std::nullopt);
    // Atomically rewrites the whole file.
    void save(const std::filesystem::path& path) const;

private:
    mutable std::mutex mu_;
    std::vector<CachedResponse> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ResponseRecord {
    ModelRole role = ModelRole::target;
    ResponseSource source = ResponseSource::scripted;
    Usage usage;
    std::string digest;
};

// One JSON object per line; see load_response_log.
std::string record_to_line(const ResponseRecord& record);
ResponseRecord record_from_line(const std::string& line);
// Reads at most `limit` records (missing file = empty). Throws CheckpointError.
std::vector<ResponseRecord> load_response_log(const std::filesystem::path& path,
                                              std::optional<std::size_t> limit = std::nullopt);

class ResponseLog {
public:
    void append(ResponseRecord record);
    std::vector<ResponseRecord> records() const;
    std::size_t size() const;
    // Records added since the last call.
    std::vector<ResponseRecord> take_pending();
    void restore(std::vector<ResponseRecord> records);

private:
    mutable std::mutex mu_;
    std::vector<ResponseRecord> records_;
    std::size_t persisted_ = 0;
};

struct TokenTotals {
    std::size_t optimizer = 0;
    std::size_t target = 0;
    Usage optimizer_usage;
    Usage target_usage;
};

TokenTotals token_totals(std::span<const ResponseRecord> records);

class Semaphore {
public:
    explicit Semaphore(std::size_t count) : count_(count) {}
    void acquire();
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t count_;
};

class LlmGateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit LlmGateway(RetryPolicy policy = {});

    void set_adapter(ModelRole role, std::shared_ptr<ChatAdapter> adapter, std::size_t max_in_flight = 4);
    bool has_adapter(ModelRole role) const;
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

    ChatResponse complete(const ChatRequest& req);

    ResponseCache& cache() noexcept { return cache_; }
    ResponseLog& log() noexcept { return log_; }
    const ResponseLog& log() const noexcept { return log_; }

private:
    struct Slot {
        std::shared_ptr<ChatAdapter> adapter;
        std::unique_ptr<Semaphore> in_flight;
    };

    RetryPolicy policy_;
    Sleeper sleeper_;
    std::map<ModelRole, Slot> slots_;
    ResponseCache cache_;
    ResponseLog log_;
};

} // namespace kppo
