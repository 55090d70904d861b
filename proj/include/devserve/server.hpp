#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "devserve/config.hpp"
#include "devserve/frontend.hpp"
#include "devserve/scheduler.hpp"
#include "devserve/tokenizer.hpp"

namespace devserve {

// OpenAI-compatible HTTP facade over the serving stack: POST
// /v1/completions and /v1/chat/completions with optional SSE streaming,
// backed by the wall-clock scheduler loop.  serve() blocks; stop() may be
// called from any thread.
class Server {
  public:
    explicit Server(AppConfig cfg);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds (an ephemeral port when cfg.listen_port == 0), spins up the
    // plane threads, and serves until stop().  False when the bind fails.
    bool serve();
    void stop();

    int port() const { return port_.load(); }
    bool wait_until_ready(double timeout_s) const;

    const Tokenizer& tokenizer() const { return *tok_; }

  private:
    struct Stack;  // owns ring/transport/engine/scheduler/frontend + threads

    std::string build_chat_prompt(const std::string& body, std::string& err) const;

    AppConfig cfg_;
    std::unique_ptr<Tokenizer> tok_;
    std::unique_ptr<Stack> stack_;
    std::unique_ptr<struct ServerImpl> impl_;  // hides the httplib dependency
    std::atomic<int> port_{0};
    std::atomic<bool> ready_{false};
};

}  // namespace devserve
