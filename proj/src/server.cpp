#include "devserve/server.hpp"

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <mutex>
#include <optional>

#include <httplib.h>
#include <json.hpp>

#include "devserve/event_log.hpp"
#include "devserve/kv_pool.hpp"
#include "devserve/ring_buffer.hpp"
#include "devserve/transport.hpp"

namespace devserve {

using json = nlohmann::json;

namespace {

void nap_ns(TimeNs ns) {
    std::this_thread::sleep_for(std::chrono::nanoseconds(std::max<TimeNs>(ns, 1)));
}

std::string error_body(const std::string& message, const char* type = "invalid_request_error") {
    json j{{"error", {{"message", message}, {"type", type}}}};
    return j.dump();
}

// One live SSE response: frames queued by the reader-thread sink, drained by
// the HTTP worker's chunked provider.
struct SseStream {
    explicit SseStream(const Tokenizer* tok) : detok(tok) {}

    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> frames;
    bool closed = false;

    StreamDetokenizer detok;
    TokenId last_id = 0;
    bool any_token = false;

    std::string tag;
    std::string model;
    std::int64_t created = 0;
    bool chat = false;
    TokenId eos = 0;
};

struct CollectState {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<TokenId> ids;
    bool done = false;
};

struct ParsedRequest {
    std::string prompt;
    std::uint32_t max_tokens = 16;
    bool stream = false;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string model = "devserve";
    bool chat = false;
    std::string error;  // nonempty -> 400
};

ParsedRequest parse_request(const std::string& body, bool chat) {
    ParsedRequest out;
    out.chat = chat;
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        out.error = "request body is not valid JSON";
        return out;
    }
    if (!j.is_object()) {
        out.error = "request body must be a JSON object";
        return out;
    }
    try {
        if (chat) {
            if (!j.contains("messages") || !j["messages"].is_array() || j["messages"].empty()) {
                out.error = "chat requests need a non-empty messages array";
                return out;
            }
            std::string prompt;
            for (const auto& m : j["messages"]) {
                if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
                    !m["role"].is_string() || !m["content"].is_string()) {
                    out.error = "each message needs string role and content";
                    return out;
                }
                prompt += m["role"].get<std::string>();
                prompt += ": ";
                prompt += m["content"].get<std::string>();
                prompt += "\n";
            }
            prompt += "assistant:";
            out.prompt = std::move(prompt);
        } else {
            if (!j.contains("prompt") || !j["prompt"].is_string()) {
                out.error = "prompt must be a string";
                return out;
            }
            out.prompt = j["prompt"].get<std::string>();
        }
        if (out.prompt.empty()) {
            out.error = "prompt must not be empty";
            return out;
        }
        if (j.contains("max_tokens")) {
            if (!j["max_tokens"].is_number_integer() || j["max_tokens"].get<std::int64_t>() < 1) {
                out.error = "max_tokens must be a positive integer";
                return out;
            }
            out.max_tokens = static_cast<std::uint32_t>(
                std::min<std::int64_t>(j["max_tokens"].get<std::int64_t>(), 1 << 20));
        }
        out.stream = j.value("stream", false);
        if (j.contains("seed") && j["seed"].is_number_unsigned()) {
            out.seed = j["seed"].get<std::uint64_t>();
            out.has_seed = true;
        }
        if (j.contains("model") && j["model"].is_string())
            out.model = j["model"].get<std::string>();
    } catch (const json::exception& e) {
        out.error = std::string("malformed request: ") + e.what();
    }
    return out;
}

std::string full_response_json(const ParsedRequest& preq, const std::string& tag,
                               std::int64_t created, const std::string& text,
                               const char* finish_reason, std::size_t prompt_tokens,
                               std::size_t completion_tokens) {
    json usage{{"prompt_tokens", prompt_tokens},
               {"completion_tokens", completion_tokens},
               {"total_tokens", prompt_tokens + completion_tokens}};
    json j;
    if (preq.chat) {
        j = json{{"id", tag},
                 {"object", "chat.completion"},
                 {"created", created},
                 {"model", preq.model},
                 {"choices",
                  json::array({json{{"index", 0},
                                    {"message", {{"role", "assistant"}, {"content", text}}},
                                    {"finish_reason", finish_reason}}})},
                 {"usage", usage}};
    } else {
        j = json{{"id", tag},
                 {"object", "text_completion"},
                 {"created", created},
                 {"model", preq.model},
                 {"choices", json::array({json{{"index", 0},
                                               {"text", text},
                                               {"finish_reason", finish_reason}}})},
                 {"usage", usage}};
    }
    // Decoded text can hold invalid UTF-8; emit replacement characters.
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace

// Owns the serving planes and their threads.
struct Server::Stack {
    RingBuffer ring;
    Transport transport;
    KvPagePool kv;
    EngineEmulator engine;
    EventLog log;
    WallClock clock;
    std::unique_ptr<HostBridge> bridge;
    DeviceScheduler sched;
    RingRegions regions;
    Frontend fe;

    std::atomic<bool> stop_flag{false};
    std::thread sched_thread, flusher, reader;

    explicit Stack(const AppConfig& app)
        : ring(app.ring_capacity, app.input_arena_tokens, app.output_arena_tokens),
          transport(app.transport),
          kv(app.kv_page_size, app.kv_total_pages),
          engine(app.model, app.graphs, app.latency),
          bridge(app.scheduler.mode == SchedMode::host_mediated
                     ? std::make_unique<HostBridge>(8ull << 20)
                     : nullptr),
          sched(ring, engine, kv, app.scheduler, &log, bridge.get(), &clock),
          regions(register_ring_regions(transport, ring)),
          fe(ring, transport, regions, app.frontend) {}

    void start() {
        sched_thread = std::thread([this] { sched.run_loop([this] { return stop_flag.load(); }); });
        flusher = std::thread([this] {
            std::vector<SubmitBatch> open;
            for (;;) {
                const bool stopping = stop_flag.load();
                const TimeNs now = clock.now();
                if (auto d = fe.submit_deadline(); d && (*d <= now || stopping)) {
                    if (auto b = fe.flush_submits(now, stopping)) open.push_back(*b);
                }
                for (auto it = open.begin(); it != open.end();) {
                    if (it->complete_at <= now) {
                        fe.finish_submits(*it, now);
                        it = open.erase(it);
                    } else {
                        ++it;
                    }
                }
                if (stopping && open.empty() && !fe.submit_deadline()) break;
                nap_ns(20 * kUs);
            }
        });
        reader = std::thread([this] {
            for (;;) {
                const TimeNs now = clock.now();
                ReaderOutcome out = fe.advance_reader(now);
                if (stop_flag.load()) break;
                const TimeNs wait = out.next_event > now ? out.next_event - now : 0;
                nap_ns(std::min<TimeNs>(wait, 2 * kMs));
            }
        });
    }

    void shutdown() {
        stop_flag.store(true);
        if (sched_thread.joinable()) sched_thread.join();
        if (flusher.joinable()) flusher.join();
        if (reader.joinable()) reader.join();
    }

    // Retry the enqueue across at most two forced metadata refreshes.  The
    // sink is copied per attempt; a refresh_pending outcome never stores it.
    EnqueueOutcome submit(std::span<const TokenId> prompt, std::uint32_t max_output,
                          std::uint64_t seed, const TokenSink& sink) {
        for (int attempt = 0; attempt < 3; ++attempt) {
            EnqueueOutcome out = fe.enqueue_request(prompt, max_output, seed, clock.now(), sink);
            if (out.kind != EnqueueOutcome::Kind::refresh_pending) return out;
            const TimeNs until = out.retry_at;
            while (clock.now() < until && !stop_flag.load())
                nap_ns(std::min<TimeNs>(until - clock.now(), kMs));
        }
        return {};  // defaults to rejected
    }
};

struct ServerImpl {
    httplib::Server http;
};

Server::Server(AppConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<ServerImpl>()) {
    if (!cfg_.vocab_path.empty()) {
        tok_ = std::make_unique<Tokenizer>(Tokenizer::load(cfg_.vocab_path, cfg_.merges_path));
    } else {
        tok_ = std::make_unique<Tokenizer>(Tokenizer::byte_level());
    }
    // The pseudo-model must only emit ids the tokenizer can turn back into
    // text.
    cfg_.model.vocab_size = std::min<std::uint32_t>(
        cfg_.model.vocab_size, static_cast<std::uint32_t>(tok_->vocab_size()));
}

Server::~Server() {
    stop();
}

void Server::stop() {
    impl_->http.stop();
    if (stack_) stack_->shutdown();
}

bool Server::wait_until_ready(double timeout_s) const {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::nanoseconds(static_cast<TimeNs>(timeout_s * 1e9));
    while (std::chrono::steady_clock::now() < deadline) {
        if (ready_.load() && port_.load() > 0) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    return ready_.load() && port_.load() > 0;
}

bool Server::serve() {
    stack_ = std::make_unique<Stack>(cfg_);
    stack_->start();

    auto handle = [this](const httplib::Request& req, httplib::Response& res, bool chat) {
        ParsedRequest preq = parse_request(req.body, chat);
        if (!preq.error.empty()) {
            res.status = 400;
            res.set_content(error_body(preq.error), "application/json");
            return;
        }
        std::vector<TokenId> prompt_ids = tok_->encode(preq.prompt);
        if (prompt_ids.empty()) {
            res.status = 400;
            res.set_content(error_body("prompt tokenized to nothing"), "application/json");
            return;
        }
        if (prompt_ids.size() > stack_->ring.input_quota()) {
            res.status = 400;
            res.set_content(error_body("prompt is longer than the per-slot budget"),
                            "application/json");
            return;
        }
        const std::uint32_t max_output = std::min<std::uint32_t>(
            preq.max_tokens, stack_->ring.output_quota());
        static std::atomic<std::uint64_t> tag_counter{1};
        const std::uint64_t tag_n = tag_counter.fetch_add(1);
        const std::uint64_t seed =
            preq.has_seed ? preq.seed : splitmix64(0xD1CEB00CULL ^ tag_n);
        const std::string tag =
            (chat ? "chatcmpl-" : "cmpl-") + std::to_string(tag_n);
        const auto created = static_cast<std::int64_t>(std::time(nullptr));

        if (preq.stream) {
            auto st = std::make_shared<SseStream>(tok_.get());
            st->tag = tag;
            st->model = preq.model;
            st->created = created;
            st->chat = chat;
            st->eos = cfg_.model.eos_token;
            TokenSink sink = [st](std::span<const TokenId> ids, TimeNs, bool final) {
                std::vector<std::string> frames;
                if (!ids.empty()) {
                    st->any_token = true;
                    st->last_id = ids.back();
                    std::string text = st->detok.push(ids);
                    if (!text.empty())
                        frames.push_back(sse_data_event(completion_chunk_json(
                            st->tag, st->model, st->created, text, st->chat, nullptr)));
                }
                if (final) {
                    std::string tail = st->detok.finish();
                    if (!tail.empty())
                        frames.push_back(sse_data_event(completion_chunk_json(
                            st->tag, st->model, st->created, tail, st->chat, nullptr)));
                    const char* reason =
                        st->any_token && st->last_id == st->eos ? "stop" : "length";
                    frames.push_back(sse_data_event(completion_chunk_json(
                        st->tag, st->model, st->created, "", st->chat, reason)));
                    frames.push_back(sse_done_event());
                }
                std::lock_guard<std::mutex> g(st->mu);
                for (auto& f : frames) st->frames.push_back(std::move(f));
                if (final) st->closed = true;
                st->cv.notify_all();
            };
            EnqueueOutcome out = stack_->submit(prompt_ids, max_output, seed, std::move(sink));
            if (out.kind != EnqueueOutcome::Kind::accepted) {
                res.status = 429;
                res.set_header("Retry-After", "1");
                res.set_content(error_body("no request slot is free; retry shortly",
                                           "overloaded_error"),
                                "application/json");
                return;
            }
            const std::uint64_t request_id = out.request_id;
            Frontend* fe = &stack_->fe;
            res.set_chunked_content_provider(
                "text/event-stream",
                [st, fe, request_id](std::size_t, httplib::DataSink& sink) {
                    std::unique_lock<std::mutex> lk(st->mu);
                    st->cv.wait_for(lk, std::chrono::seconds(30),
                                    [&] { return !st->frames.empty() || st->closed; });
                    bool wrote_all = true;
                    while (!st->frames.empty()) {
                        std::string frame = std::move(st->frames.front());
                        st->frames.pop_front();
                        lk.unlock();
                        if (!sink.write(frame.data(), frame.size())) {
                            wrote_all = false;
                            lk.lock();
                            break;
                        }
                        lk.lock();
                    }
                    if (!wrote_all) {
                        lk.unlock();
                        fe->fail_request(request_id);  // client went away
                        return false;
                    }
                    if (st->closed && st->frames.empty()) {
                        lk.unlock();
                        sink.done();
                        return true;
                    }
                    return true;
                });
            return;
        }

        auto col = std::make_shared<CollectState>();
        TokenSink sink = [col](std::span<const TokenId> ids, TimeNs, bool final) {
            std::lock_guard<std::mutex> g(col->mu);
            col->ids.insert(col->ids.end(), ids.begin(), ids.end());
            if (final) {
                col->done = true;
                col->cv.notify_all();
            }
        };
        EnqueueOutcome out = stack_->submit(prompt_ids, max_output, seed, std::move(sink));
        if (out.kind != EnqueueOutcome::Kind::accepted) {
            res.status = 429;
            res.set_header("Retry-After", "1");
            res.set_content(
                error_body("no request slot is free; retry shortly", "overloaded_error"),
                "application/json");
            return;
        }
        std::unique_lock<std::mutex> lk(col->mu);
        const bool finished =
            col->cv.wait_for(lk, std::chrono::seconds(300), [&] { return col->done; });
        if (!finished) {
            res.status = 500;
            res.set_content(error_body("generation timed out", "server_error"),
                            "application/json");
            return;
        }
        std::vector<TokenId> ids = col->ids;
        lk.unlock();
        const char* reason =
            !ids.empty() && ids.back() == cfg_.model.eos_token ? "stop" : "length";
        std::string text = tok_->decode(ids);
        res.set_content(full_response_json(preq, tag, created, text, reason,
                                           prompt_ids.size(), ids.size()),
                        "application/json");
    };

    impl_->http.Post("/v1/completions",
                     [handle](const httplib::Request& req, httplib::Response& res) {
                         handle(req, res, false);
                     });
    impl_->http.Post("/v1/chat/completions",
                     [handle](const httplib::Request& req, httplib::Response& res) {
                         handle(req, res, true);
                     });
    impl_->http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"status\":\"ok\"}", "application/json");
    });

    int bound = cfg_.listen_port;
    if (bound == 0) {
        bound = impl_->http.bind_to_any_port(cfg_.listen_host);
        if (bound < 0) return false;
    } else if (!impl_->http.bind_to_port(cfg_.listen_host, bound)) {
        return false;
    }
    port_.store(bound);
    ready_.store(true);
    const bool ok = impl_->http.listen_after_bind();
    ready_.store(false);
    return ok;
}

}  // namespace devserve
