#include "fesr/variants.hpp"

namespace fesr {

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names{
        "FG",       "FG-CO",      "FG-IP",      "FG-Dimg",      "FG-Dimg_cls", "FG-Dz",    "BASELINE",
        "FESR_SL",  "FESR_OneSt", "FESR_JL-IL", "FESR_JL-RDBP", "FESR_Real",   "FESR_JL"};
    return names;
}

std::optional<VariantSpec> variant_spec(std::string_view name) {
    VariantSpec v;
    v.name = std::string(name);

    if (name.starts_with("FG")) {
        v.train_recognizer = false;
        v.joint_feedback = false;
        v.intra_loss = false;
        if (name == "FG") {
            return v;
        }
        if (name == "FG-CO") {
            v.content_losses = false;
            v.identity_loss = false;
        } else if (name == "FG-IP") {
            v.identity_loss = false;
        } else if (name == "FG-Dimg") {
            v.image_discriminator = false;
            v.image_classifier = false;
        } else if (name == "FG-Dimg_cls") {
            v.image_classifier = false;
        } else if (name == "FG-Dz") {
            v.latent_discriminator = false;
        } else {
            return std::nullopt;
        }
        return v;
    }

    if (name == "FESR_JL") {
        return v;
    }
    if (name == "BASELINE") {
        v.train_generator = false;
        v.content_losses = false;
        v.identity_loss = false;
        v.image_discriminator = false;
        v.image_classifier = false;
        v.latent_discriminator = false;
        v.joint_feedback = false;
        v.intra_loss = false;
        v.prior_synthesis = false;
        return v;
    }
    if (name == "FESR_SL") {
        v.joint_feedback = false;
        v.sequential = true;
        return v;
    }
    if (name == "FESR_OneSt") {
        v.pretrain_stage = false;
        return v;
    }
    if (name == "FESR_JL-IL") {
        v.intra_loss = false;
        return v;
    }
    if (name == "FESR_JL-RDBP") {
        v.rdbp = false;
        return v;
    }
    if (name == "FESR_Real") {
        v.prior_synthesis = false;
        return v;
    }
    return std::nullopt;
}

}  // namespace fesr
