// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/edit_engine.hpp"

#include <cmath>

#include "forge/hash.hpp"
#include "forge/image.hpp"
#include "forge/sampler.hpp"

namespace forge {

void EditRequest::validate() const {
    if (steps < 1) throw ValidationError("steps", "must be >= 1");
    if (input_image.empty()) throw ValidationError("input_image", "must be non-empty");
    if (!input_image.all_finite()) throw ValidationError("input_image", "must be finite");
    guidance.validate();
}

EditResult edit(const EditRequest& req, EditDenoiser& denoiser, const LatentCodec& codec,
                const NoiseSchedule<double>& schedule) {
    req.validate();
    if (schedule.T() != req.steps) throw PreconditionError("edit: schedule length differs from requested steps");
    const Tensor3<double> z_image = codec.encode(req.input_image);

    EditResult out;
    Tensor3<double> z =
        standard_normal<double>(z_image.channels(), z_image.rows(), z_image.cols(), initial_noise_seed(req.seed));
    out.trace.latents.push_back(z);
    for (int t = schedule.T(), k = 0; t >= 1; --t, ++k) {
        const LatentState<double> state{z, t};
        const double abar = schedule.alpha_bar(t);
        EditPrediction p;
        try {
            p = denoiser.predict(EditQuery{state, abar, z_image, req.instruction});
        } catch (const std::exception& e) {
            throw AdapterError("edit denoiser failed at step " + std::to_string(k) + " (t=" + std::to_string(t) +
                               "): " + e.what());
        }
        const Tensor3<double> eps = cfg_compose(p.eps_uncond, p.eps_img, p.eps_full, req.guidance);
        out.trace.steps.push_back({t, std::move(p.instruction_attention)});
        z = ddim_step(z, eps, abar, schedule.alpha_bar(t - 1));
        out.trace.latents.push_back(z);
    }
    out.generated = codec.decode(z);
    out.final_image = out.generated;
    return out;
}

BinaryMask extract_instruction_mask(const EditTrace& trace, Eigen::Index rows, Eigen::Index cols, double factor,
                                    double tail) {
    if (!(tail > 0.0 && tail <= 1.0)) throw PreconditionError("attention tail must lie in (0, 1]");
    std::vector<const Grid<double>*> recorded;
    for (const auto& s : trace.steps) {
        if (s.attention) recorded.push_back(&*s.attention);
    }
    if (recorded.empty()) {
        throw PreconditionError("no instruction attention was recorded; use an edit denoiser that reports attention");
    }
    const auto n = recorded.size();
    const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(double(n) * tail)));
    Grid<double> mean = Grid<double>::Zero(recorded.front()->rows(), recorded.front()->cols());
    for (std::size_t i = n - take; i < n; ++i) {
        if (recorded[i]->rows() != mean.rows() || recorded[i]->cols() != mean.cols()) {
            throw PreconditionError("instruction attention changes shape between steps");
        }
        mean += *recorded[i];
    }
    mean /= double(take);
    return resample_mask(binarize_attention(AttentionMap<double>{mean, "instruction"}, factor), rows, cols);
}

PostEditResult post_edit(const Image& i_ori, const Image& i_gen, const BinaryMask& m_instr, PostEditAdapters a,
                         const std::string& prompt, std::uint64_t seed, FeatureSource features) {
    if (!i_ori.same_shape(i_gen)) throw PreconditionError("post_edit: images differ in size");
    if (m_instr.rows() != i_ori.rows() || m_instr.cols() != i_ori.cols()) {
        throw PreconditionError("post_edit: instruction mask must be on the image grid");
    }
    PostEditResult out;
    auto pick = [&](const Image& image, const char* which) -> BinaryMask {
        const auto segments = a.segmenter.segment(image);
        for (const auto& s : segments) {
            if (s.rows() != image.rows() || s.cols() != image.cols()) {
                throw AdapterError(std::string("segmenter returned a mask of the wrong size for ") + which);
            }
        }
        if (segments.empty()) {
            out.warnings.push_back(std::string("segmenter found no regions in ") + which + "; using the instruction mask");
            return m_instr;
        }
        return select_max_overlap(segments, m_instr);
    };
    out.m_gen = pick(i_gen, "I_gen");
    out.m_ori = pick(i_ori, "I_ori");
    const BinaryMask parts[2] = {*out.m_gen, *out.m_ori};
    out.edit_mask = union_masks(parts);

    Eigen::VectorXd f = a.encoder.encode(i_ori);
    if (features == FeatureSource::OriginalAndGenerated) {
        const Eigen::VectorXd g = a.encoder.encode(i_gen);
        Eigen::VectorXd both(f.size() + g.size());
        both << f, g;
        f = std::move(both);
    }
    RegionInpaintJob job{i_gen, i_ori, out.edit_mask, a.edges.edges(i_gen), std::move(f), prompt, seed};
    Image inpainted = a.inpaint.inpaint_region(job);
    if (!inpainted.same_shape(i_ori)) throw AdapterError("inpainter returned an image of the wrong size");
    out.final_image = composite(inpainted, i_ori, out.edit_mask.grid());
    return out;
}

EditResult run_edit(const EditRequest& req, const AdapterRegistry& adapters, const EditOptions& options) {
    if (!adapters.edit_denoiser || !adapters.codec) throw PreconditionError("edit: registry lacks edit_denoiser or codec");
    req.validate();
    const int f = adapters.codec->factor();
    if (req.input_image.rows() % f != 0 || req.input_image.cols() % f != 0) {
        throw PreconditionError("edit: image size must be a multiple of the codec factor " + std::to_string(f));
    }
    const auto schedule = NoiseSchedule<double>::scaled_linear(req.steps);
    EditResult out = edit(req, *adapters.edit_denoiser, *adapters.codec, schedule);
    out.provenance = {{"seed", req.seed},
                      {"steps", req.steps},
                      {"instruction", req.instruction},
                      {"guidance", {{"s_image", req.guidance.s_image}, {"s_text", req.guidance.s_text}}},
                      {"post_edit", req.post_edit},
                      {"adapters", adapters.versions()}};
    if (!req.post_edit) return out;

    if (!adapters.segmenter || !adapters.inpaint_denoiser || !adapters.image_encoder || !adapters.edge_extractor) {
        throw PreconditionError("post-edit: registry lacks segmenter, inpaint_denoiser, image_encoder or edge_extractor");
    }
    out.instruction_mask = extract_instruction_mask(out.trace, req.input_image.rows(), req.input_image.cols(),
                                                    options.binarize_factor, options.attention_tail);
    auto post = post_edit(req.input_image, out.generated, *out.instruction_mask,
                          {*adapters.segmenter, *adapters.inpaint_denoiser, *adapters.image_encoder,
                           *adapters.edge_extractor},
                          req.instruction, mix_seed(req.seed, "post-edit"), options.features);
    out.final_image = std::move(post.final_image);
    out.edit_mask = std::move(post.edit_mask);
    out.warnings = std::move(post.warnings);
    out.provenance["edit_mask_area"] = out.edit_mask->area();
    out.provenance["instruction_mask_area"] = out.instruction_mask->area();
    out.provenance["features"] = options.features == FeatureSource::Original ? "original" : "original+generated";
    return out;
}

} // namespace forge
