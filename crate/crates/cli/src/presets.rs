use crate::config::ScenarioConfig;

const PRESETS: [(&str, &str); 4] = [
    ("bell-computational", include_str!("../presets/bell-computational.json")),
    ("three-outcome-split", include_str!("../presets/three-outcome-split.json")),
    ("independent-product", include_str!("../presets/independent-product.json")),
    ("pure-state", include_str!("../presets/pure-state.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn get(name: &str) -> Option<ScenarioConfig> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::from_json(text).expect("bundled preset parses"))
}

pub fn all() -> Vec<ScenarioConfig> {
    names().filter_map(get).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::dim_cap;

    #[test]
    fn every_preset_validates() {
        for cfg in all() {
            let sc = cfg.scenario().unwrap_or_else(|e| panic!("{:?}: {e}", cfg.name));
            let q = sc.rate_quantities().unwrap();
            cfg.params(&q, dim_cap().unwrap()).unwrap();
        }
        assert!(get("nope").is_none());
    }
}
