// external.hpp
//
// Client side of the adapter protocol: a child process spoken to over
// stdin/stdout, one request in flight at a time.

#pragma once

#include <string>
#include <vector>

#include <sys/types.h>

#include "agm/image.hpp"
#include "agm/pipeline/protocol.hpp"
#include "agm/prompting/prompts.hpp"

namespace agm::segmenter
{

class AdapterProcess
{
public:
    /// Spawns argv[0] (PATH lookup, no shell). Throws AdapterSpawnError.
    AdapterProcess(const std::vector<std::string>& argv, int timeout_ms);
    ~AdapterProcess();

    AdapterProcess(const AdapterProcess&) = delete;
    AdapterProcess& operator=(const AdapterProcess&) = delete;

    /// Sends one request and waits for its reply. Throws AdapterTimeoutError
    /// (the child is killed), AdapterReplyError for EOF, a broken pipe, an
    /// undecodable line or an id mismatch. A well-formed ok=false reply is
    /// returned as is.
    protocol::Response call(const protocol::Request& request);

    bool alive() const { return pid_ > 0; }

private:
    void write_line(const std::string& line);
    std::string read_line();
    void kill_child();

    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    int timeout_ms_;
    std::string buffer_;
    std::string program_;
};

/// Segment via the adapter. Throws AdapterReplyError for ok=false or a
/// missing mask and AdapterDimMismatchError when the mask size differs from
/// the image.
Mask segment_external(AdapterProcess& adapter, const Image& image, const prompting::PromptSet& prompts,
                      const std::string& request_id);

}  // namespace agm::segmenter
