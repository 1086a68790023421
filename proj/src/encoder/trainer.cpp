// trainer.cpp

#include "agm/encoder/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "agm/error.hpp"
#include "agm/io/manifest.hpp"
#include "agm/io/netpbm.hpp"
#include "agm/nn/adam.hpp"
#include "agm/nn/ops.hpp"

namespace agm::encoder
{

ContrastiveResult contrastive_loss(const nn::Tensor& image_embeddings, const nn::Tensor& text_embeddings,
                                   double temperature)
{
    if (!(temperature > 0.0))
        throw ValueError("contrastive_loss: temperature must be positive");
    if (image_embeddings.rank() != 2 || image_embeddings.shape() != text_embeddings.shape() ||
        image_embeddings.dim(0) == 0)
        throw DimensionError("contrastive_loss: expected matching nonempty N x D inputs, got " +
                             nn::shape_string(image_embeddings.shape()) + " and " +
                             nn::shape_string(text_embeddings.shape()));

    const std::size_t N = image_embeddings.dim(0), D = image_embeddings.dim(1);
    std::vector<double> logits(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
        {
            double s = 0.0;
            for (std::size_t d = 0; d < D; ++d)
                s += image_embeddings[i * D + d] * text_embeddings[j * D + d];
            logits[i * N + j] = s / temperature;
        }

    // Row softmax P (image->text) and column softmax Q (text->image).
    std::vector<double> P(N * N), Q(N * N);
    double loss_rows = 0.0, loss_cols = 0.0;
    for (std::size_t i = 0; i < N; ++i)
    {
        double mx = logits[i * N];
        for (std::size_t j = 1; j < N; ++j)
            mx = std::max(mx, logits[i * N + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < N; ++j)
            z += std::exp(logits[i * N + j] - mx);
        const double lse = mx + std::log(z);
        loss_rows += lse - logits[i * N + i];
        for (std::size_t j = 0; j < N; ++j)
            P[i * N + j] = std::exp(logits[i * N + j] - lse);
    }
    for (std::size_t j = 0; j < N; ++j)
    {
        double mx = logits[j];
        for (std::size_t i = 1; i < N; ++i)
            mx = std::max(mx, logits[i * N + j]);
        double z = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            z += std::exp(logits[i * N + j] - mx);
        const double lse = mx + std::log(z);
        loss_cols += lse - logits[j * N + j];
        for (std::size_t i = 0; i < N; ++i)
            Q[i * N + j] = std::exp(logits[i * N + j] - lse);
    }

    ContrastiveResult r;
    const double n = static_cast<double>(N);
    r.loss = 0.5 * (loss_rows / n + loss_cols / n);
    r.grad_image = nn::Tensor({N, D});
    r.grad_text = nn::Tensor({N, D});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
        {
            const double delta = i == j ? 1.0 : 0.0;
            const double g = 0.5 / n * ((P[i * N + j] - delta) + (Q[i * N + j] - delta)) / temperature;
            if (g == 0.0)
                continue;
            for (std::size_t d = 0; d < D; ++d)
            {
                r.grad_image[i * D + d] += g * text_embeddings[j * D + d];
                r.grad_text[j * D + d] += g * image_embeddings[i * D + d];
            }
        }
    return r;
}

namespace
{

nn::Tensor stack_rows(const std::vector<nn::Tensor>& rows)
{
    const std::size_t D = rows.front().size();
    nn::Tensor out({rows.size(), D});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].data().begin(), rows[i].data().end(), out.data().begin() + static_cast<long>(i * D));
    return out;
}

nn::Tensor row(const nn::Tensor& m, std::size_t i)
{
    const std::size_t D = m.dim(1);
    return nn::Tensor({D}, std::vector<double>(m.data().begin() + static_cast<long>(i * D),
                                               m.data().begin() + static_cast<long>((i + 1) * D)));
}

void add_into(nn::Tensor& dst, const nn::Tensor& src)
{
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += src[i];
}

struct Prepared
{
    std::vector<nn::Tensor> pixels;
    std::vector<std::string> captions;
};

Prepared prepare(std::span<const TrainSample> samples)
{
    Prepared p;
    for (const auto& s : samples)
    {
        p.pixels.push_back(image_to_tensor(s.image));
        p.captions.push_back(s.caption);
    }
    return p;
}

double batch_loss(const DualEncoder& model, const Prepared& data, std::span<const std::size_t> batch)
{
    std::vector<nn::Tensor> ev, et;
    for (std::size_t i : batch)
    {
        ev.push_back(nn::l2_normalize(model.image().encode(data.pixels[i]).embedding.values));
        et.push_back(nn::l2_normalize(model.text().encode(data.captions[i]).values));
    }
    return contrastive_loss(stack_rows(ev), stack_rows(et), model.temperature()).loss;
}

double prepared_loss(const DualEncoder& model, const Prepared& data, std::size_t batch_size)
{
    const std::size_t n = data.pixels.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batches)
    {
        const std::size_t end = std::min(n, start + batch_size);
        total += batch_loss(model, data, std::span(order).subspan(start, end - start));
    }
    return total / static_cast<double>(batches);
}

}  // namespace

double dataset_loss(const DualEncoder& model, std::span<const TrainSample> samples, std::size_t batch_size)
{
    if (samples.empty())
        throw ValueError("dataset_loss: empty dataset");
    if (batch_size == 0)
        throw ValueError("dataset_loss: batch size must be positive");
    return prepared_loss(model, prepare(samples), batch_size);
}

TrainResult train(std::span<const TrainSample> samples, const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    if (samples.empty())
        throw ValueError("train: empty dataset");
    if (cfg.batch_size == 0)
        throw ValueError("train: batch size must be positive");
    if (cfg.drop_incomplete && cfg.batch_size > samples.size())
        throw ValueError("train: batch size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                         std::to_string(samples.size()) + " with drop_incomplete set");
    if (cfg.image.embed_dim != cfg.text.embed_dim)
        throw DimensionError("train: image and text embedding dims differ");

    std::vector<std::string> captions;
    for (const auto& s : samples)
        captions.push_back(s.caption);

    TrainResult result;
    result.model = DualEncoder::random(cfg.image, cfg.text, Vocabulary(captions), cfg.seed, cfg.temperature);
    DualEncoder& model = result.model;
    const Prepared data = prepare(samples);

    std::vector<std::pair<std::string, nn::Tensor*>> params = model.image().parameters();
    const std::size_t n_image_params = params.size();
    for (auto& p : model.text().parameters())
        params.push_back(p);
    std::vector<nn::AdamState> adam;
    for (const auto& [name, t] : params)
        adam.push_back(nn::AdamState::zeros_like(*t));
    const nn::AdamConfig adam_cfg{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};

    result.epoch_loss.push_back(prepared_loss(model, data, cfg.batch_size));
    if (on_epoch)
        on_epoch(0, result.epoch_loss.back());

    SplitMix64 shuffle_rng(mix64(cfg.seed ^ 0x53485546464C45ULL));
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch)
    {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size)
        {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            if (cfg.drop_incomplete && end - start < cfg.batch_size)
                break;
            const std::span<const std::size_t> batch(order.data() + start, end - start);

            // Forward: one tape per image, one per distinct caption.
            std::vector<std::unique_ptr<nn::Tape>> image_tapes;
            std::vector<ImageEncoder::Recorded> image_rec;
            std::vector<nn::Var> image_unit;
            std::vector<nn::Tensor> ev, et;
            std::map<std::string, std::size_t> caption_slot;
            std::vector<std::unique_ptr<nn::Tape>> text_tapes;
            std::vector<TextEncoder::Recorded> text_rec;
            std::vector<nn::Var> text_unit;
            std::vector<std::size_t> text_of_row;

            for (std::size_t idx : batch)
            {
                auto& tape = image_tapes.emplace_back(std::make_unique<nn::Tape>());
                image_rec.push_back(model.image().forward(*tape, data.pixels[idx]));
                image_unit.push_back(tape->normalize(image_rec.back().embedding));
                ev.push_back(tape->value(image_unit.back()));

                const std::string& cap = data.captions[idx];
                auto [it, inserted] = caption_slot.emplace(cap, text_tapes.size());
                if (inserted)
                {
                    auto& ttape = text_tapes.emplace_back(std::make_unique<nn::Tape>());
                    text_rec.push_back(model.text().forward(*ttape, cap));
                    text_unit.push_back(ttape->normalize(text_rec.back().embedding));
                }
                text_of_row.push_back(it->second);
                et.push_back(text_tapes[it->second]->value(text_unit[it->second]));
            }

            const ContrastiveResult cr = contrastive_loss(stack_rows(ev), stack_rows(et), cfg.temperature);

            // Backward and accumulate parameter gradients.
            std::vector<nn::Tensor> grads;
            for (const auto& [name, t] : params)
                grads.emplace_back(t->shape());
            for (std::size_t r = 0; r < batch.size(); ++r)
            {
                image_tapes[r]->backward(image_unit[r], row(cr.grad_image, r));
                for (std::size_t p = 0; p < n_image_params; ++p)
                    add_into(grads[p], image_tapes[r]->grad(image_rec[r].params[p]));
            }
            std::vector<nn::Tensor> text_seed(text_tapes.size(), nn::Tensor({cfg.text.embed_dim}));
            for (std::size_t r = 0; r < batch.size(); ++r)
                add_into(text_seed[text_of_row[r]], row(cr.grad_text, r));
            for (std::size_t t = 0; t < text_tapes.size(); ++t)
            {
                text_tapes[t]->backward(text_unit[t], text_seed[t]);
                for (std::size_t p = 0; p < text_rec[t].params.size(); ++p)
                    add_into(grads[n_image_params + p], text_tapes[t]->grad(text_rec[t].params[p]));
            }

            for (std::size_t p = 0; p < params.size(); ++p)
                nn::adam_step(*params[p].second, grads[p], adam[p], adam_cfg);
        }

        result.epoch_loss.push_back(prepared_loss(model, data, cfg.batch_size));
        if (on_epoch)
            on_epoch(epoch, result.epoch_loss.back());
    }
    return result;
}

TrainResult train_from_manifest(const std::filesystem::path& manifest, const TrainConfig& cfg,
                                const std::filesystem::path& checkpoint, const EpochCallback& on_epoch)
{
    const auto entries = io::load_manifest(manifest);
    std::vector<TrainSample> samples;
    for (const auto& e : entries)
        if (e.split == io::Split::Train)
            samples.push_back({io::load_ppm(e.image_path), e.caption});
    if (samples.empty())
        throw ValueError("train: manifest " + manifest.string() + " has no train-split entries");
    TrainResult r = train(samples, cfg, on_epoch);
    r.model.save(checkpoint);
    return r;
}

}  // namespace agm::encoder
