//! Two-class empirical Bayes classifier on synthetic expression data.

use npmle::apps::classifier::{
    fit_classifier, synthetic_classification, ClassifierDesign, ClassifierKind, Confusion,
};
use npmle::grid::GridSpec;
use npmle::pipeline::FitOptions;

fn main() -> npmle::Result<()> {
    let opts = FitOptions::new(GridSpec::new(vec![30, 30]));
    for (name, design) in [
        ("shifted", ClassifierDesign::shifted()),
        ("correlated", ClassifierDesign::correlated()),
    ] {
        let data = synthetic_classification(&design, 5)?;
        for kind in [ClassifierKind::Joint, ClassifierKind::Independent] {
            let model = fit_classifier(&data.train, &data.train_labels, kind, &opts)?;
            let predicted = model.classify_all(&data.test)?;
            let c = Confusion::from_labels(&data.test_labels, &predicted)?;
            println!("{name} / {kind}: {} errors of {}", c.errors(), c.total());
        }
    }
    Ok(())
}
