//! Protected abbreviations, lowercase and including the trailing period.

pub fn for_language(lang: &str) -> &'static [&'static str] {
    let primary = lang.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase();
    match primary.as_str() {
        "it" => &[
            "sig.", "sigg.", "sig.ra", "dott.", "prof.", "avv.", "ing.", "don.", "d.", "s.", "ss.", "fr.", "cap.",
            "pag.", "ecc.", "es.", "vol.", "n.", "p.", "mons.", "card.",
        ],
        "en" => &[
            "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "sr.", "jr.", "rev.", "gen.", "capt.", "col.", "lt.",
            "vol.", "ch.", "p.", "pp.", "etc.", "vs.", "e.g.", "i.e.", "no.",
        ],
        "es" => &[
            "sr.", "sra.", "srta.", "d.", "dña.", "dr.", "dra.", "ud.", "uds.", "vd.", "fr.", "pág.", "cap.", "etc.",
        ],
        "fr" => &["m.", "mm.", "mme.", "mlle.", "dr.", "st.", "ste.", "p.", "chap.", "etc.", "cf."],
        "de" => &[
            "hr.", "hrn.", "fr.", "dr.", "prof.", "st.", "bzw.", "usw.", "z.b.", "d.h.", "ca.", "vgl.", "s.", "nr.",
        ],
        "nl" => &["dhr.", "mevr.", "mej.", "dr.", "prof.", "st.", "blz.", "enz.", "bijv.", "d.w.z.", "nr."],
        "pl" => &["p.", "ks.", "dr.", "prof.", "św.", "tzn.", "np.", "itd.", "itp.", "r.", "str.", "nr."],
        "ru" => &["г.", "гг.", "т.", "т.е.", "т.д.", "т.п.", "см.", "стр.", "с.", "им.", "св.", "ул."],
        _ => &[],
    }
}
