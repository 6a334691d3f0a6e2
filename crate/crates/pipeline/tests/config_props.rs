use std::path::Path;

use proptest::prelude::*;
use serde_json::json;
use slime_pipeline::config::interpolate;
use slime_pipeline::ExperimentConfig;

fn no_env(_: &str) -> Option<String> {
    None
}

fn config_with(sweep: &[usize]) -> ExperimentConfig {
    let text = json!({"alignment": {"b_sweep": sweep}}).to_string();
    ExperimentConfig::from_json(&text, &no_env).unwrap()
}

proptest! {
    #[test]
    fn dollar_free_strings_pass_through(s in "[^$]*") {
        prop_assert_eq!(interpolate(&s, &no_env).unwrap(), s);
    }

    #[test]
    fn doubled_dollars_escape(parts in prop::collection::vec("[a-z ]{0,6}", 1..6)) {
        let escaped = parts.join("$$");
        prop_assert_eq!(interpolate(&escaped, &no_env).unwrap(), parts.join("$"));
    }

    #[test]
    fn variables_expand(name in "[A-Z_]{1,8}", value in "[a-z/]{0,10}", pre in "[a-z]{0,4}") {
        let lookup = |k: &str| (k == name).then(|| value.clone());
        let got = interpolate(&format!("{pre}${{{name}}}{pre}"), &lookup).unwrap();
        prop_assert_eq!(got, format!("{pre}{value}{pre}"));
    }

    #[test]
    fn hash_ignores_output_dir(a in "[a-z/]{1,12}", b in "[a-z/]{1,12}", seed in 0u64..1000) {
        let load = |dir: &str| {
            let text = json!({"output_dir": dir, "seed": seed}).to_string();
            ExperimentConfig::from_json(&text, &no_env).unwrap().hash()
        };
        prop_assert_eq!(load(&a), load(&b));
    }

    #[test]
    fn sweeps_must_be_strictly_ascending_and_positive(sweep in prop::collection::vec(0usize..20, 0..6)) {
        let ok = !sweep.is_empty() && sweep[0] > 0 && sweep.windows(2).all(|w| w[0] < w[1]);
        prop_assert_eq!(config_with(&sweep).validate(Path::new(".")).is_ok(), ok);
    }
}
