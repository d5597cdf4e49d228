#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fesr {

/// Component toggles for the full model and each ablation.
struct VariantSpec {
    std::string name;
    bool train_generator = true;       // false only for BASELINE
    bool content_losses = true;        // reconstruction + identity
    bool identity_loss = true;
    bool image_discriminator = true;
    bool image_classifier = true;      // auxiliary classifier head of D_img
    bool latent_discriminator = true;
    bool train_recognizer = true;      // false for the synthesis-only FG family
    bool joint_feedback = true;        // recognizer loss on synthetic images reaches G
    bool sequential = false;           // FESGAN first, then R on a frozen generator
    bool pretrain_stage = true;        // false forces P_pre = 0
    bool intra_loss = true;
    bool rdbp = true;                  // false: full two-branch gradients
    bool prior_synthesis = true;       // false: x^{p,f} decoded from g(x) for every class

    bool operator==(const VariantSpec&) const = default;
};

/// Names accepted by variant_spec(): FG, FG-CO, FG-IP, FG-Dimg, FG-Dimg_cls, FG-Dz,
/// BASELINE, FESR_SL, FESR_OneSt, FESR_JL-IL, FESR_JL-RDBP, FESR_Real, FESR_JL.
const std::vector<std::string>& variant_names();
std::optional<VariantSpec> variant_spec(std::string_view name);

}  // namespace fesr
