#include "kppo/llm_gateway.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <thread>

namespace kppo {

using nlohmann::json;

std::string to_string(ModelRole role) { return role == ModelRole::optimizer ? "optimizer" : "target"; }

ModelRole role_from_string(const std::string& s) {
    if (s == "optimizer") return ModelRole::optimizer;
    if (s == "target") return ModelRole::target;
    throw SchemaError("unknown model role '" + s + "'");
}

std::string to_string(ResponseSource source) {
    switch (source) {
        case ResponseSource::http: return "http";
        case ResponseSource::scripted: return "scripted";
        case ResponseSource::cache: return "cache";
    }
    return "unknown";
}

ResponseSource source_from_string(const std::string& s) {
    if (s == "http") return ResponseSource::http;
    if (s == "scripted") return ResponseSource::scripted;
    if (s == "cache") return ResponseSource::cache;
    throw SchemaError("unknown response source '" + s + "'");
}

void ChatRequest::validate() const {
    if (messages.empty()) throw ContractError("chat request has no messages");
    for (const auto& m : messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant") {
            throw ContractError("invalid message role '" + m.role + "'");
        }
    }
    if (temperature < 0.0) throw ContractError("negative temperature");
}

std::string request_digest(const ChatRequest& req) {
    json msgs = json::array();
    for (const auto& m : req.messages) msgs.push_back(json::array({m.role, m.content}));
    json j = {
        {"role", to_string(req.role)},
        {"messages", std::move(msgs)},
        {"temperature", req.temperature},
        {"seed", req.seed ? json(*req.seed) : json(nullptr)},
        {"max_output", req.max_output},
    };
    return sha256_hex(j.dump());
}

ScriptedAdapter::ScriptedAdapter(Responder responder) : responder_(std::move(responder)) {}

void ScriptedAdapter::add(const std::string& digest, std::string text) { table_[digest] = std::move(text); }

void ScriptedAdapter::load_script(const std::filesystem::path& path) {
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            add(j.at("digest").get<std::string>(), j.at("text").get<std::string>());
        } catch (const json::exception& e) {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

ChatResponse ScriptedAdapter::send(const ChatRequest& req) {
    auto digest = request_digest(req);
    std::optional<std::string> text;
    if (auto it = table_.find(digest); it != table_.end()) {
        text = it->second;
    } else if (responder_) {
        text = responder_(req);
    }
    if (!text) throw ProtocolError("no scripted reply for request digest " + digest);
    Usage usage;
    for (const auto& m : req.messages) usage.input += count_tokens(m.content);
    usage.output = count_tokens(*text);
    return {std::move(*text), usage, ResponseSource::scripted};
}

std::chrono::milliseconds RetryPolicy::delay_for(int attempt) const {
    auto d = base_delay.count();
    for (int i = 0; i < attempt && d < max_delay.count(); ++i) d *= 2;
    return std::chrono::milliseconds(std::min<long long>(d, max_delay.count()));
}

std::optional<CachedResponse> ResponseCache::lookup(const std::string& digest) const {
    std::lock_guard lock(mu_);
    auto it = index_.find(digest);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second];
}

void ResponseCache::insert(CachedResponse entry) {
    std::lock_guard lock(mu_);
    if (index_.contains(entry.digest)) return;
    index_.emplace(entry.digest, entries_.size());
    entries_.push_back(std::move(entry));
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

void ResponseCache::sort_from(std::size_t first) {
    std::lock_guard lock(mu_);
    if (first >= entries_.size()) return;
    std::sort(entries_.begin() + static_cast<std::ptrdiff_t>(first), entries_.end(),
              [](const CachedResponse& a, const CachedResponse& b) { return a.digest < b.digest; });
    for (std::size_t i = first; i < entries_.size(); ++i) index_[entries_[i].digest] = i;
}

void ResponseCache::load(const std::filesystem::path& path, std::optional<std::size_t> limit) {
    if (!std::filesystem::exists(path)) return;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        if (limit && size() >= *limit) break;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            insert({j.at("digest").get<std::string>(), j.at("text").get<std::string>(),
                    {j.at("usage").at("input").get<std::size_t>(), j.at("usage").at("output").get<std::size_t>()}});
        } catch (const json::exception& e) {
            throw CheckpointError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void ResponseCache::save(const std::filesystem::path& path) const {
    std::string out;
    {
        std::lock_guard lock(mu_);
        for (const auto& e : entries_) {
            json j = {{"digest", e.digest}, {"text", e.text}, {"usage", {{"input", e.usage.input}, {"output", e.usage.output}}}};
            out += j.dump();
            out += '\n';
        }
    }
    write_file_atomic(path, out);
}

std::string record_to_line(const ResponseRecord& r) {
    json j = {{"role", to_string(r.role)},
              {"source", to_string(r.source)},
              {"input_tokens", r.usage.input},
              {"output_tokens", r.usage.output},
              {"digest", r.digest}};
    return j.dump();
}

ResponseRecord record_from_line(const std::string& line) {
    auto j = json::parse(line);
    ResponseRecord r;
    r.role = role_from_string(j.at("role").get<std::string>());
    r.source = source_from_string(j.at("source").get<std::string>());
    r.usage.input = j.at("input_tokens").get<std::size_t>();
    r.usage.output = j.at("output_tokens").get<std::size_t>();
    r.digest = j.at("digest").get<std::string>();
    return r;
}

std::vector<ResponseRecord> load_response_log(const std::filesystem::path& path, std::optional<std::size_t> limit) {
    std::vector<ResponseRecord> out;
    if (!std::filesystem::exists(path)) return out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        if (limit && out.size() >= *limit) break;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(record_from_line(line));
        } catch (const std::exception& e) {
            throw CheckpointError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void ResponseLog::append(ResponseRecord record) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(record));
}

std::vector<ResponseRecord> ResponseLog::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::size_t ResponseLog::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

std::vector<ResponseRecord> ResponseLog::take_pending() {
    std::lock_guard lock(mu_);
    std::vector<ResponseRecord> out(records_.begin() + static_cast<std::ptrdiff_t>(persisted_), records_.end());
    persisted_ = records_.size();
    return out;
}

void ResponseLog::restore(std::vector<ResponseRecord> records) {
    std::lock_guard lock(mu_);
    records_ = std::move(records);
    persisted_ = records_.size();
}

TokenTotals token_totals(std::span<const ResponseRecord> records) {
    TokenTotals t;
    for (const auto& r : records) {
        if (r.source == ResponseSource::cache) continue;
        auto& u = r.role == ModelRole::optimizer ? t.optimizer_usage : t.target_usage;
        u.input += r.usage.input;
        u.output += r.usage.output;
    }
    t.optimizer = t.optimizer_usage.total();
    t.target = t.target_usage.total();
    return t;
}

void Semaphore::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
}

void Semaphore::release() {
    {
        std::lock_guard lock(mu_);
        ++count_;
    }
    cv_.notify_one();
}

LlmGateway::LlmGateway(RetryPolicy policy)
    : policy_(policy), sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

void LlmGateway::set_adapter(ModelRole role, std::shared_ptr<ChatAdapter> adapter, std::size_t max_in_flight) {
    slots_[role] = Slot{std::move(adapter), std::make_unique<Semaphore>(std::max<std::size_t>(1, max_in_flight))};
}

bool LlmGateway::has_adapter(ModelRole role) const { return slots_.contains(role); }

ChatResponse LlmGateway::complete(const ChatRequest& req) {
    req.validate();
    auto it = slots_.find(req.role);
    if (it == slots_.end()) throw ConfigError("no adapter configured for role " + to_string(req.role));

    const bool cacheable = req.deterministic();
    std::string digest = request_digest(req);
    if (cacheable) {
        if (auto hit = cache_.lookup(digest)) {
            log_.append({req.role, ResponseSource::cache, hit->usage, digest});
            return {hit->text, hit->usage, ResponseSource::cache};
        }
    }

    auto& slot = it->second;
    int last_status = 0;
    std::string last_error;
    for (int attempt = 0; attempt < std::max(1, policy_.max_attempts); ++attempt) {
        if (attempt > 0) sleeper_(policy_.delay_for(attempt - 1));
        slot.in_flight->acquire();
        try {
            auto resp = slot.adapter->send(req);
            slot.in_flight->release();
            log_.append({req.role, resp.source, resp.usage, digest});
            if (cacheable) cache_.insert({digest, resp.text, resp.usage});
            return resp;
        } catch (const TransientError& e) {
            slot.in_flight->release();
            last_status = e.status();
            last_error = e.what();
        } catch (...) {
            slot.in_flight->release();
            throw;
        }
    }
    throw GatewayError("request " + digest.substr(0, 12) + " failed after " + std::to_string(policy_.max_attempts) +
                           " attempts (last status " + std::to_string(last_status) + ": " + last_error + ")",
                       last_status);
}

} // namespace kppo
