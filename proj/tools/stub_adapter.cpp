// stub_adapter.cpp
//
// Minimal adapter used by the test suite. Usage: agm-stub-adapter [MODE]
//   ones (default)  all-object mask of the image size
//   reference       reference region growing on the given prompts
//   wrong-dims      mask one row taller than the image
//   sleep:MS        wait MS milliseconds, then answer like ones
//   garbage         a line that is not JSON
//   exit            exit without answering
//   error           ok=false reply
//   wrong-id        reply with a different id

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include "agm/error.hpp"
#include "agm/pipeline/protocol.hpp"
#include "agm/segmenter/segmenter.hpp"

using namespace agm;

namespace
{

protocol::Response answer(const protocol::Request& req, const std::string& mode)
{
    protocol::Response r;
    r.id = req.id;
    if (req.op != protocol::Op::Segment)
    {
        r.ok = false;
        r.error = "stub adapter only implements segment";
        return r;
    }
    if (mode == "error")
    {
        r.ok = false;
        r.error = "stub failure";
        return r;
    }
    const auto it = req.tensors.find("image");
    if (it == req.tensors.end())
    {
        r.ok = false;
        r.error = "segment needs an image tensor";
        return r;
    }
    const Image image = protocol::to_image(it->second);
    Mask m(image.width(), image.height() + (mode == "wrong-dims" ? 1 : 0));
    if (mode == "reference")
    {
        if (!req.prompts)
            throw ProtocolError("segment needs prompts");
        m = segmenter::segment(image, prompting::prompt_from_json(*req.prompts), {});
    }
    else
        for (int y = 0; y < m.height(); ++y)
            for (int x = 0; x < m.width(); ++x)
                m.set(x, y);
    r.tensors.emplace("mask", protocol::from_mask(m));
    if (mode == "wrong-id")
        r.id += "-other";
    return r;
}

}  // namespace

int main(int argc, char** argv)
{
    const std::string mode = argc > 1 ? argv[1] : "ones";
    std::string line;
    while (std::getline(std::cin, line))
    {
        if (mode == "exit")
            return 0;
        if (mode == "garbage")
        {
            std::cout << "this is not json" << std::endl;
            continue;
        }
        if (mode.rfind("sleep:", 0) == 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(std::stoi(mode.substr(6))));

        protocol::Response r;
        try
        {
            const protocol::Request req = protocol::decode_request(line);
            r.id = req.id;
            r = answer(req, mode.rfind("sleep:", 0) == 0 ? "ones" : mode);
        }
        catch (const Error& e)
        {
            r.ok = false;
            r.error = e.what();
        }
        std::cout << protocol::encode_response(r) << std::endl;
    }
    return 0;
}
