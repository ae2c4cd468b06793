//! Glucose prediction on synthetic subjects whose state-space parameters
//! come from two groups.

use npmle::apps::glucose::{glucose_report, synthetic_subjects, GlucoseOptions, SubjectDesign};

fn main() -> npmle::Result<()> {
    let subjects = synthetic_subjects(&SubjectDesign::default(), 9)?;
    let report = glucose_report(&subjects, &GlucoseOptions::default())?;
    print!("{}", report.text_table());
    Ok(())
}
