//! Versioned prompt texts. These are part of the artifact contract: the
//! exact wording is load-bearing for reply parsing, so they live as tracked
//! text files rather than inline string literals.

pub const TRANSCRIBE_SYSTEM: &str = include_str!("assets/transcribe_system.txt");
pub const BOUNDARY_REPAIR_SYSTEM: &str = include_str!("assets/boundary_repair_system.txt");
pub const AUDIT_SYSTEM: &str = include_str!("assets/audit_system.txt");
pub const PARAPHRASE_SYSTEM: &str = include_str!("assets/paraphrase_system.txt");
pub const PARAPHRASE_USER: &str = include_str!("assets/paraphrase_user.txt");
pub const CLUSTER_SYSTEM: &str = include_str!("assets/cluster_system.txt");
pub const CLUSTER_USER: &str = include_str!("assets/cluster_user.txt");
pub const DISTILL_SYSTEM: &str = include_str!("assets/distill_system.txt");
pub const DISTILL_USER: &str = include_str!("assets/distill_user.txt");
pub const RELATION_SYSTEM: &str = include_str!("assets/relation_system.txt");
pub const RELATION_USER: &str = include_str!("assets/relation_user.txt");
pub const GRADER_SYSTEM: &str = include_str!("assets/grader_system.txt");
pub const GRADER_USER: &str = include_str!("assets/grader_user.txt");
pub const LRM_SYSTEM: &str = include_str!("assets/lrm_system.txt");
pub const LRM_USER: &str = include_str!("assets/lrm_user.txt");
pub const TAXONOMY_SYSTEM: &str = include_str!("assets/taxonomy_system.txt");
pub const TAXONOMY_USER: &str = include_str!("assets/taxonomy_user.txt");
pub const DISAMBIGUATE_SYSTEM: &str = include_str!("assets/disambiguate_system.txt");
pub const DISAMBIGUATE_USER: &str = include_str!("assets/disambiguate_user.txt");

/// Fills `{name}` placeholders. Unknown placeholders are left untouched so
/// that literal braces in JSON schemas survive.
pub fn fill(template: &str, bindings: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in bindings {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
