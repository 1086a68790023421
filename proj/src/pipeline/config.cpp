// config.cpp

#include "agm/pipeline/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "agm/error.hpp"
#include "toml.hpp"

namespace agm::pipeline
{

namespace
{

class Reader
{
public:
    explicit Reader(const toml::table& root) : root_(root) {}

    const toml::node* node(const std::string& section, const std::string& key)
    {
        known_.insert(section + "." + key);
        const auto* sec = root_.get(section);
        if (!sec)
            return nullptr;
        if (!sec->is_table())
            throw ConfigError("config: [" + section + "] must be a table");
        return sec->as_table()->get(key);
    }

    void real(const std::string& s, const std::string& k, double& out)
    {
        const auto* n = node(s, k);
        if (!n)
            return;
        if (auto v = n->value_exact<double>())
            out = *v;
        else if (auto i = n->value_exact<std::int64_t>())
            out = static_cast<double>(*i);
        else
            throw ConfigError("config: " + s + "." + k + " must be a number");
    }

    template <class Int>
    void integer(const std::string& s, const std::string& k, Int& out, std::int64_t lo,
                 std::int64_t hi = std::numeric_limits<std::int64_t>::max())
    {
        const auto* n = node(s, k);
        if (!n)
            return;
        const auto v = n->value_exact<std::int64_t>();
        if (!v)
            throw ConfigError("config: " + s + "." + k + " must be an integer");
        if (*v < lo || *v > hi)
            throw ConfigError("config: " + s + "." + k + " = " + std::to_string(*v) + " is out of range");
        out = static_cast<Int>(*v);
    }

    void seed(const std::string& s, const std::string& k, std::uint64_t& out)
    {
        std::int64_t v = 0;
        const auto* n = node(s, k);
        if (!n)
            return;
        integer(s, k, v, 0);
        out = static_cast<std::uint64_t>(v);
    }

    void boolean(const std::string& s, const std::string& k, bool& out)
    {
        const auto* n = node(s, k);
        if (!n)
            return;
        const auto v = n->value_exact<bool>();
        if (!v)
            throw ConfigError("config: " + s + "." + k + " must be true or false");
        out = *v;
    }

    std::optional<std::string> string(const std::string& s, const std::string& k)
    {
        const auto* n = node(s, k);
        if (!n)
            return std::nullopt;
        const auto v = n->value_exact<std::string>();
        if (!v)
            throw ConfigError("config: " + s + "." + k + " must be a string");
        return *v;
    }

    const toml::array* array(const std::string& s, const std::string& k)
    {
        const auto* n = node(s, k);
        if (!n)
            return nullptr;
        if (!n->is_array())
            throw ConfigError("config: " + s + "." + k + " must be an array");
        return n->as_array();
    }

    std::optional<std::vector<std::string>> strings(const std::string& s, const std::string& k)
    {
        const auto* a = array(s, k);
        if (!a)
            return std::nullopt;
        std::vector<std::string> out;
        for (const auto& e : *a)
        {
            const auto v = e.value_exact<std::string>();
            if (!v)
                throw ConfigError("config: " + s + "." + k + " must be an array of strings");
            out.push_back(*v);
        }
        return out;
    }

    void reject_unknown() const
    {
        for (const auto& [section, value] : root_)
        {
            if (!value.is_table())
                throw ConfigError("config: top-level key '" + std::string(section.str()) + "' is not a section");
            for (const auto& [key, v] : *value.as_table())
            {
                const std::string full = std::string(section.str()) + "." + std::string(key.str());
                if (!known_.count(full))
                    throw ConfigError("config: unknown key '" + full + "'");
            }
        }
    }

private:
    const toml::table& root_;
    std::set<std::string> known_;
};

Rgb parse_rgb(const toml::node& n, const std::string& where)
{
    const auto* a = n.as_array();
    if (!a || a->size() != 3)
        throw ConfigError("config: " + where + " must be [r, g, b]");
    std::uint8_t c[3];
    for (std::size_t i = 0; i < 3; ++i)
    {
        const auto v = (*a)[i].value_exact<std::int64_t>();
        if (!v || *v < 0 || *v > 255)
            throw ConfigError("config: " + where + " components must be integers in 0..255");
        c[i] = static_cast<std::uint8_t>(*v);
    }
    return {c[0], c[1], c[2]};
}

PipelineConfig decode(const toml::table& root)
{
    PipelineConfig c;
    Reader r(root);

    if (auto v = r.string("pipeline", "checkpoint"))
        c.checkpoint = *v;
    r.real("pipeline", "gate", c.gate);
    r.boolean("pipeline", "gate_first", c.gate_first);
    if (auto v = r.string("pipeline", "mode"))
        c.mode = prompting::parse_mode(*v);
    r.integer("pipeline", "workers", c.workers, 1, 256);
    r.seed("pipeline", "seed", c.seed);
    if (auto v = r.string("pipeline", "mask_dir"))
        c.mask_dir = *v;

    r.real("prompting", "activation_fraction", c.prompting.activation_fraction);
    r.integer("prompting", "connectivity", c.prompting.connectivity, 0, 8);
    r.integer("prompting", "sample_count", c.prompting.sample_count, 0, 1 << 20);
    r.integer("prompting", "sample_radius", c.prompting.sample_radius, 0, 1 << 20);

    if (auto v = r.string("segmenter", "backend"))
        c.segmenter.backend = segmenter::parse_backend(*v);
    r.real("segmenter", "color_tolerance", c.segmenter.color_tolerance);
    if (auto v = r.strings("segmenter", "command"))
        c.segmenter.command = *v;
    r.integer("segmenter", "timeout_ms", c.segmenter.timeout_ms, 1, std::numeric_limits<int>::max());

    auto& t = c.train;
    r.integer("train", "epochs", t.epochs, 0);
    r.integer("train", "batch_size", t.batch_size, 1);
    r.real("train", "learning_rate", t.learning_rate);
    r.real("train", "beta1", t.beta1);
    r.real("train", "beta2", t.beta2);
    r.real("train", "eps", t.eps);
    r.real("train", "weight_decay", t.weight_decay);
    r.real("train", "temperature", t.temperature);
    r.seed("train", "seed", t.seed);
    r.boolean("train", "drop_incomplete", t.drop_incomplete);
    r.integer("train", "conv1_stride", t.image.conv1_stride, 1, 8);
    r.integer("train", "hidden_channels", t.image.hidden_channels, 1, 1024);
    r.integer("train", "feature_channels", t.image.feature_channels, 1, 1024);
    std::size_t embed = t.image.embed_dim;
    r.integer("train", "embed_dim", embed, 1, 4096);
    t.image.embed_dim = t.text.embed_dim = embed;
    r.integer("train", "token_dim", t.text.token_dim, 1, 4096);

    auto& s = c.synth;
    r.integer("synth", "width", s.width, 1, 4096);
    r.integer("synth", "height", s.height, 1, 4096);
    if (auto v = r.strings("synth", "shapes"))
    {
        s.shapes.clear();
        for (const auto& name : *v)
            s.shapes.push_back(io::parse_shape(name));
    }
    if (const auto* a = r.array("synth", "colors"))
    {
        s.colors.clear();
        for (const auto& e : *a)
        {
            const auto* tbl = e.as_table();
            const auto name = tbl ? (*tbl)["name"].value<std::string>() : std::nullopt;
            const auto* rgb = tbl ? tbl->get("rgb") : nullptr;
            if (!name || !rgb || tbl->size() != 2)
                throw ConfigError("config: synth.colors entries must be {name = \"...\", rgb = [r, g, b]}");
            s.colors.push_back({*name, parse_rgb(*rgb, "synth.colors." + *name)});
        }
    }
    if (auto v = r.strings("synth", "concepts"))
    {
        s.concepts.clear();
        for (const auto& caption : *v)
        {
            const auto sp = caption.find(' ');
            if (sp == std::string::npos || caption.find(' ', sp + 1) != std::string::npos)
                throw ConfigError("config: synth concept '" + caption + "' must be \"<color> <shape>\"");
            s.concepts.push_back({caption.substr(0, sp), io::parse_shape(caption.substr(sp + 1))});
        }
    }
    r.integer("synth", "distractor_count", s.distractor_count, 0, 64);
    r.integer("synth", "noise_amplitude", s.noise_amplitude, 0, 255);
    r.integer("synth", "count_per_concept", s.count_per_concept, 1, 1 << 20);
    r.real("synth", "min_radius", s.min_radius);
    r.real("synth", "max_radius", s.max_radius);
    r.real("synth", "distractor_scale", s.distractor_scale);
    if (const auto* n = r.node("synth", "background"))
        s.background = parse_rgb(*n, "synth.background");
    r.real("synth", "train_fraction", s.train_fraction);
    r.seed("synth", "seed", s.seed);

    r.reject_unknown();
    c.validate();
    return c;
}

void apply_override(toml::table& root, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq)
        throw ConfigError("config: override '" + assignment + "' must look like section.key=value");
    const std::string section = assignment.substr(0, dot);
    const std::string key = assignment.substr(dot + 1, eq - dot - 1);
    const std::string text = assignment.substr(eq + 1);

    toml::node_view<toml::node> target = root[section];
    if (!target)
        root.insert(section, toml::table{});
    else if (!target.is_table())
        throw ConfigError("config: [" + section + "] must be a table");
    toml::table& sec = *root[section].as_table();
    try
    {
        toml::table parsed = toml::parse("value = " + text);
        sec.insert_or_assign(key, std::move(*parsed.get("value")));
    }
    catch (const toml::parse_error&)
    {
        sec.insert_or_assign(key, text);
    }
}

PipelineConfig build(toml::table root, const std::vector<std::string>& overrides)
{
    for (const auto& o : overrides)
        apply_override(root, o);
    return decode(root);
}

}  // namespace

void PipelineConfig::validate() const
{
    if (!std::isfinite(gate) || gate < -1.0 || gate > 1.0)
        throw ConfigError("config: pipeline.gate must be in [-1, 1]");
    if (workers < 1)
        throw ConfigError("config: pipeline.workers must be >= 1");
    prompting.validate();
    segmenter.validate();
    synth.validate();
    if (train.batch_size < 1)
        throw ConfigError("config: train.batch_size must be >= 1");
    if (!(train.learning_rate > 0.0) || !(train.temperature > 0.0) || !(train.eps > 0.0))
        throw ConfigError("config: train.learning_rate, temperature and eps must be > 0");
    if (!(train.beta1 >= 0.0 && train.beta1 < 1.0 && train.beta2 >= 0.0 && train.beta2 < 1.0))
        throw ConfigError("config: train.beta1 and beta2 must be in [0, 1)");
    if (!(train.weight_decay >= 0.0))
        throw ConfigError("config: train.weight_decay must be >= 0");
}

PipelineConfig parse_config(std::string_view toml_text, const std::vector<std::string>& overrides)
{
    try
    {
        return build(toml::parse(toml_text), overrides);
    }
    catch (const toml::parse_error& e)
    {
        std::ostringstream msg;
        msg << "config: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides)
{
    if (!file)
        return build(toml::table{}, overrides);
    std::ifstream in(*file, std::ios::binary);
    if (!in)
        throw ConfigError("config: cannot read " + file->string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), overrides);
}

}  // namespace agm::pipeline
