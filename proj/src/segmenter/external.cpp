// external.cpp

#include "agm/segmenter/external.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <mutex>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "agm/error.hpp"

extern char** environ;

namespace agm::segmenter
{

namespace
{

using Clock = std::chrono::steady_clock;

void ignore_sigpipe()
{
    static std::once_flag once;
    std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

int remaining_ms(Clock::time_point deadline)
{
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
}

}  // namespace

AdapterProcess::AdapterProcess(const std::vector<std::string>& argv, int timeout_ms) : timeout_ms_(timeout_ms)
{
    if (argv.empty())
        throw AdapterSpawnError("adapter: empty command");
    if (timeout_ms <= 0)
        throw AdapterSpawnError("adapter: timeout must be positive");
    ignore_sigpipe();
    program_ = argv[0];

    int in[2], out[2];
    if (pipe2(in, O_CLOEXEC) != 0)
        throw AdapterSpawnError("adapter: pipe failed: " + std::string(std::strerror(errno)));
    if (pipe2(out, O_CLOEXEC) != 0)
    {
        const int e = errno;
        close(in[0]);
        close(in[1]);
        throw AdapterSpawnError("adapter: pipe failed: " + std::string(std::strerror(e)));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_t pid = -1;
    const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    close(in[0]);
    close(out[1]);
    if (rc != 0)
    {
        close(in[1]);
        close(out[0]);
        throw AdapterSpawnError("adapter: cannot start '" + program_ + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in[1];
    from_child_ = out[0];
    fcntl(to_child_, F_SETFL, fcntl(to_child_, F_GETFL) | O_NONBLOCK);
    fcntl(from_child_, F_SETFL, fcntl(from_child_, F_GETFL) | O_NONBLOCK);
}

AdapterProcess::~AdapterProcess()
{
    if (to_child_ >= 0)
        close(to_child_);
    if (pid_ > 0)
    {
        // closed stdin is the shutdown signal; give the child a moment
        for (int i = 0; i < 50; ++i)
        {
            if (waitpid(pid_, nullptr, WNOHANG) == pid_)
            {
                pid_ = -1;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        kill_child();
    }
    if (from_child_ >= 0)
        close(from_child_);
}

void AdapterProcess::kill_child()
{
    if (pid_ <= 0)
        return;
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
    pid_ = -1;
}

void AdapterProcess::write_line(const std::string& line)
{
    const std::string data = line + "\n";
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms_);
    std::size_t sent = 0;
    while (sent < data.size())
    {
        const ssize_t n = write(to_child_, data.data() + sent, data.size() - sent);
        if (n > 0)
        {
            sent += static_cast<std::size_t>(n);
            continue;
        }
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK)
        {
            const int e = errno;
            kill_child();
            throw AdapterReplyError("adapter '" + program_ + "' closed its input: " + std::strerror(e));
        }
        pollfd p{to_child_, POLLOUT, 0};
        const int r = poll(&p, 1, remaining_ms(deadline));
        if (r == 0)
        {
            kill_child();
            throw AdapterTimeoutError("adapter '" + program_ + "' did not accept the request within " +
                                      std::to_string(timeout_ms_) + " ms");
        }
    }
}

std::string AdapterProcess::read_line()
{
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms_);
    for (;;)
    {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos)
        {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        pollfd p{from_child_, POLLIN, 0};
        const int r = poll(&p, 1, remaining_ms(deadline));
        if (r < 0 && errno == EINTR)
            continue;
        if (r == 0)
        {
            kill_child();
            throw AdapterTimeoutError("adapter '" + program_ + "' did not reply within " + std::to_string(timeout_ms_) +
                                      " ms");
        }
        char chunk[65536];
        const ssize_t n = read(from_child_, chunk, sizeof chunk);
        if (n > 0)
        {
            buffer_.append(chunk, static_cast<std::size_t>(n));
            continue;
        }
        if (n < 0 && (errno == EAGAIN || errno == EINTR))
            continue;
        kill_child();
        throw AdapterReplyError("adapter '" + program_ + "' exited before replying");
    }
}

protocol::Response AdapterProcess::call(const protocol::Request& request)
{
    if (pid_ <= 0)
        throw AdapterReplyError("adapter '" + program_ + "' is no longer running");
    write_line(protocol::encode_request(request));
    const std::string line = read_line();
    protocol::Response r;
    try
    {
        r = protocol::decode_response(line);
    }
    catch (const ProtocolError& e)
    {
        throw AdapterReplyError("adapter '" + program_ + "' sent a malformed reply: " + e.what());
    }
    if (r.id != request.id)
        throw AdapterReplyError("adapter '" + program_ + "' replied to id '" + r.id + "', expected '" + request.id +
                                "'");
    return r;
}

Mask segment_external(AdapterProcess& adapter, const Image& image, const prompting::PromptSet& prompts,
                      const std::string& request_id)
{
    protocol::Request req;
    req.op = protocol::Op::Segment;
    req.id = request_id;
    req.tensors.emplace("image", protocol::from_image(image));
    req.prompts = prompting::prompt_to_json(prompts);

    const protocol::Response r = adapter.call(req);
    if (!r.ok)
        throw AdapterReplyError("adapter error: " + r.error);
    const auto it = r.tensors.find("mask");
    if (it == r.tensors.end())
        throw AdapterReplyError("adapter reply has no 'mask' tensor");
    const auto& shape = it->second.shape;
    if (shape.size() != 2 || shape[0] != static_cast<std::size_t>(image.height()) ||
        shape[1] != static_cast<std::size_t>(image.width()))
        throw AdapterDimMismatchError("adapter mask " + nn::shape_string(shape) + " does not match image " +
                                      std::to_string(image.height()) + "x" + std::to_string(image.width()));
    try
    {
        return protocol::to_mask(it->second);
    }
    catch (const ProtocolError& e)
    {
        throw AdapterReplyError(std::string("adapter mask unusable: ") + e.what());
    }
}

}  // namespace agm::segmenter
