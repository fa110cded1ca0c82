//! Published reference values for the n = 20 simulation studies of STS(2, 0)
//! and LTS(3), used for side-by-side comparison in experiment reports.
//!
//! Estimator columns are ordered HR1_MML, HR1_LS, HR2_MML, HR2_LS.

use serde::Serialize;

use crate::families::FamilySpec;

/// Averages of the parameter estimates printed above each table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParameterHeader {
    pub mml_mu: f64,
    pub mml_sigma: f64,
    pub ls_mu: f64,
    pub ls_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceTable {
    pub name: &'static str,
    pub family: FamilySpec,
    pub n: usize,
    pub header: ParameterHeader,
    /// Quantile grid of the means/variances table.
    pub q: &'static [f64],
    pub exact: &'static [f64],
    pub means: &'static [[f64; 4]],
    pub variances: &'static [[f64; 4]],
    /// Quantile grid of the coverage table (it may differ in one point).
    pub coverage_q: &'static [f64],
    /// HR2 coverage as (MML, LS).
    pub coverage: &'static [(f64, f64)],
}

impl ReferenceTable {
    /// Row index of `q` in the means/variances grid.
    pub fn row(&self, q: f64) -> Option<usize> {
        self.q.iter().position(|&x| (x - q).abs() < 1e-9)
    }

    /// Row index of `q` in the coverage grid.
    pub fn coverage_row(&self, q: f64) -> Option<usize> {
        self.coverage_q.iter().position(|&x| (x - q).abs() < 1e-9)
    }
}

pub const STS_R2_D0: ReferenceTable = ReferenceTable {
    name: "sts_r2_d0",
    family: FamilySpec::Sts { r: 2, d: 0.0 },
    n: 20,
    header: ParameterHeader {
        mml_mu: 0.0068,
        mml_sigma: 1.006,
        ls_mu: 0.0064,
        ls_sigma: 0.984,
    },
    q: &[0.07, 0.12, 0.17, 0.21, 0.26, 0.31, 0.36, 0.4, 0.45, 0.5, 0.55, 0.6, 0.64, 0.69, 0.74, 0.79, 0.83, 0.88, 0.93],
    exact: &[0.1214, 0.1798, 0.2271, 0.2671, 0.3022, 0.3341, 0.3649, 0.3966, 0.4317, 0.4728, 0.5224, 0.583, 0.6567, 0.7456, 0.8526, 0.9819, 1.1415, 1.3477, 1.647],
    means: &[
        [0.1238, 0.1184, 0.1212, 0.1134],
        [0.1778, 0.1721, 0.1773, 0.1706],
        [0.2228, 0.2174, 0.2228, 0.217],
        [0.2622, 0.2574, 0.2621, 0.2572],
        [0.2979, 0.2938, 0.297, 0.2932],
        [0.3314, 0.3282, 0.3292, 0.3269],
        [0.3644, 0.3622, 0.3603, 0.3598],
        [0.3986, 0.3977, 0.3925, 0.3943],
        [0.4366, 0.4371, 0.4282, 0.4327],
        [0.4806, 0.4828, 0.4705, 0.4776],
        [0.5331, 0.5374, 0.5216, 0.5316],
        [0.5967, 0.6035, 0.584, 0.597],
        [0.6733, 0.6832, 0.6603, 0.6762],
        [0.7652, 0.7786, 0.7525, 0.7713],
        [0.875, 0.8927, 0.8633, 0.8851],
        [1.007, 1.0299, 0.9974, 1.0223],
        [1.1692, 1.1981, 1.1618, 1.1906],
        [1.378, 1.4151, 1.3723, 1.4065],
        [1.6801, 1.7264, 1.6739, 1.7166],
    ],
    variances: &[
        [0.0032, 0.0034, 0.0037, 0.0044],
        [0.0036, 0.0041, 0.0038, 0.0045],
        [0.0035, 0.0041, 0.0036, 0.0043],
        [0.0032, 0.0038, 0.0031, 0.0039],
        [0.0028, 0.0035, 0.0027, 0.0034],
        [0.0025, 0.0032, 0.0024, 0.0031],
        [0.0025, 0.0032, 0.0024, 0.003],
        [0.0029, 0.0037, 0.0028, 0.0034],
        [0.0037, 0.0048, 0.0036, 0.0045],
        [0.0052, 0.0068, 0.0051, 0.0066],
        [0.0076, 0.0102, 0.0076, 0.01],
        [0.0114, 0.0155, 0.0115, 0.0154],
        [0.017, 0.0231, 0.0173, 0.0232],
        [0.0248, 0.0337, 0.0256, 0.034],
        [0.0355, 0.0478, 0.0367, 0.0481],
        [0.0499, 0.0662, 0.0514, 0.0663],
        [0.0692, 0.0905, 0.0706, 0.0897],
        [0.096, 0.132, 0.0964, 0.1204],
        [0.1376, 0.1709, 0.1345, 0.1646],
    ],
    coverage_q: &[0.07, 0.12, 0.17, 0.21, 0.26, 0.31, 0.36, 0.4, 0.45, 0.5, 0.55, 0.6, 0.64, 0.69, 0.74, 0.79, 0.83, 0.88, 0.93],
    coverage: &[(0.843, 0.686), (0.874, 0.719), (0.891, 0.746), (0.91, 0.769), (0.919, 0.782), (0.931, 0.796), (0.939, 0.804), (0.943, 0.809), (0.947, 0.812), (0.949, 0.813), (0.947, 0.814), (0.945, 0.811), (0.938, 0.806), (0.93, 0.798), (0.921, 0.787), (0.91, 0.772), (0.896, 0.754), (0.876, 0.73), (0.847, 0.696)],
};

pub const LTS_P3: ReferenceTable = ReferenceTable {
    name: "lts_p3",
    family: FamilySpec::Lts { p: 3.0 },
    n: 20,
    header: ParameterHeader {
        mml_mu: 0.0019,
        mml_sigma: 1.049,
        ls_mu: 0.0018,
        ls_sigma: 0.972,
    },
    q: &[0.07, 0.12, 0.17, 0.21, 0.26, 0.31, 0.36, 0.4, 0.45, 0.5, 0.55, 0.6, 0.64, 0.69, 0.74, 0.79, 0.83, 0.88, 0.93],
    exact: &[0.0532, 0.0948, 0.1338, 0.1701, 0.2032, 0.2329, 0.2588, 0.2806, 0.2978, 0.3102, 0.3174, 0.3188, 0.3139, 0.3023, 0.283, 0.2553, 0.2179, 0.1692, 0.2728],
    means: &[
        [0.0628, 0.0538, 0.0584, 0.0467],
        [0.1039, 0.0922, 0.1008, 0.0876],
        [0.1406, 0.1282, 0.1385, 0.1252],
        [0.174, 0.162, 0.1728, 0.1606],
        [0.2041, 0.1934, 0.2038, 0.1935],
        [0.2308, 0.2218, 0.2312, 0.2232],
        [0.254, 0.2468, 0.2551, 0.2495],
        [0.2734, 0.2679, 0.2749, 0.2715],
        [0.2887, 0.2845, 0.2906, 0.289],
        [0.2996, 0.2961, 0.3019, 0.3013],
        [0.3058, 0.3024, 0.3083, 0.3079],
        [0.3069, 0.3028, 0.3094, 0.3083],
        [0.3026, 0.2969, 0.305, 0.3024],
        [0.2923, 0.2844, 0.2945, 0.2896],
        [0.2754, 0.2648, 0.277, 0.2691],
        [0.2512, 0.2378, 0.252, 0.2407],
        [0.2185, 0.2026, 0.2183, 0.2038],
        [0.1754, 0.1582, 0.1738, 0.1567],
        [0.2665, 0.2547, 0.2678, 0.2585],
    ],
    variances: &[
        [0.0012, 0.0014, 0.0014, 0.0017],
        [0.002, 0.0024, 0.0022, 0.0026],
        [0.0026, 0.0031, 0.0027, 0.0033],
        [0.0027, 0.0034, 0.0029, 0.0037],
        [0.0026, 0.0034, 0.0028, 0.0037],
        [0.0023, 0.0031, 0.0025, 0.0033],
        [0.0019, 0.0025, 0.002, 0.0027],
        [0.0014, 0.0019, 0.0015, 0.0021],
        [0.0009, 0.0013, 0.001, 0.0014],
        [0.0005, 0.0008, 0.0006, 0.0009],
        [0.0003, 0.0005, 0.0004, 0.0006],
        [0.0003, 0.0005, 0.0003, 0.0006],
        [0.0005, 0.0008, 0.0006, 0.0009],
        [0.001, 0.0015, 0.0011, 0.0016],
        [0.0016, 0.0023, 0.0018, 0.0026],
        [0.0024, 0.0032, 0.0026, 0.0036],
        [0.0031, 0.004, 0.0033, 0.0044],
        [0.0034, 0.0041, 0.0037, 0.0046],
        [0.002, 0.0027, 0.0021, 0.003],
    ],
    coverage_q: &[0.07, 0.12, 0.17, 0.21, 0.26, 0.31, 0.36, 0.4, 0.45, 0.5, 0.55, 0.59, 0.64, 0.69, 0.74, 0.79, 0.83, 0.88, 0.93],
    coverage: &[(0.771, 0.741), (0.84, 0.817), (0.88, 0.858), (0.906, 0.888), (0.922, 0.909), (0.933, 0.923), (0.943, 0.937), (0.95, 0.947), (0.953, 0.953), (0.956, 0.955), (0.955, 0.953), (0.952, 0.949), (0.949, 0.94), (0.939, 0.927), (0.926, 0.912), (0.906, 0.888), (0.88, 0.857), (0.839, 0.814), (0.918, 0.904)],
};

/// Looks up a reference table by name (`sts_r2_d0` or `lts_p3`).
pub fn by_name(name: &str) -> Option<&'static ReferenceTable> {
    match name {
        "sts_r2_d0" => Some(&STS_R2_D0),
        "lts_p3" => Some(&LTS_P3),
        _ => None,
    }
}
