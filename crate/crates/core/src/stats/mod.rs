//! Agreement statistics and hypothesis tests for validating GCA predictions.

mod agreement;
mod hypothesis;
pub mod special;

pub use agreement::{
    agreement_report, bland_altman, confusion_matrix, landis_koch, mae, round_reals, to_report_json,
    weighted_kappa, AgreementLevel, AgreementReport, BlandAltman, ClassAccuracy, ConfusionMatrix3,
    PairedScores, LOA_Z, TOTAL_CATEGORIES,
};
pub use hypothesis::{
    average_ranks, kruskal_wallis, paired_t, rank_sum_test, rm_anova, spearman, Anova, Correlation,
    KruskalWallis, PairedT, RankSum,
};
