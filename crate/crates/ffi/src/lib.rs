//! C ABI over the `pisr` workbench.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! a [`PisrStatus`]; on failure a message is available from
//! [`pisr_last_error_message`] on the same thread. Strings returned through
//! `char **` out-parameters are heap allocated and must be released with
//! [`pisr_string_free`]. Panics are caught and reported as
//! [`PisrStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pisr::critic::{parse_verdict, Critic, MockCritic};
use pisr::exprtree::{parse, render, ExpressionTree, VariableSchema};
use pisr::gpengine::{self, EngineConfig, SearchResult};
use pisr::physlab::{
    generate, read_dataset, write_dataset, Dataset, NoiseSpec, NoiseTarget, SamplingRanges,
    ScenarioId, ScenarioSpec,
};
use pisr::treemetric::{tree_distance, tree_score, TreeDistanceConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PisrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Io = 5,
    Search = 6,
    Panic = 7,
}

/// Variable names and units for parsing and rendering.
pub struct PisrSchema(VariableSchema);

/// A validated expression tree.
pub struct PisrTree(ExpressionTree);

/// A generated or loaded dataset.
pub struct PisrDataset(Dataset);

/// The outcome of one search run.
pub struct PisrSearchResult(SearchResult);

/// Parsed critic scores. `feedback` is not included; see
/// [`pisr_parse_verdict`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PisrVerdict {
    pub dim_corr: f64,
    pub simp: f64,
    pub sim: f64,
    /// Aggregate `1 - mean(dim_corr, simp, sim)`.
    pub c: f64,
    pub clamped: bool,
    pub extra_text: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PisrStatus, String);

impl Failure {
    fn new(status: PisrStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting failures and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PisrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PisrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            PisrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            PisrStatus::NullPointer,
            format!("`{name}` is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(PisrStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(PisrStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(
            PisrStatus::NullPointer,
            "output pointer is null",
        ));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_box<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(
            PisrStatus::NullPointer,
            "output pointer is null",
        ));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))?;
    put(out, c.into_raw())
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn scenario_arg(s: &str) -> Result<ScenarioId, Failure> {
    s.parse()
        .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pisr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pisr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pisr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a schema from comma-separated variable names.
///
/// # Safety
/// `names` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_schema_new(
    names: *const c_char,
    out: *mut *mut PisrSchema,
) -> PisrStatus {
    guard(|| {
        let names = str_arg(names, "names")?;
        let list: Vec<&str> = names
            .split(',')
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .collect();
        let schema = VariableSchema::from_names(&list)
            .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))?;
        put_box(out, PisrSchema(schema))
    })
}

/// Schema (with units) of a built-in scenario: `drop_ball`, `shm` or `em_wave`.
///
/// # Safety
/// `scenario` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_schema_for_scenario(
    scenario: *const c_char,
    out: *mut *mut PisrSchema,
) -> PisrStatus {
    guard(|| {
        let id = scenario_arg(str_arg(scenario, "scenario")?)?;
        put_box(out, PisrSchema(ScenarioSpec::new(id).schema))
    })
}

/// Number of variables in the schema.
///
/// # Safety
/// `schema` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_schema_len(schema: *const PisrSchema, out: *mut usize) -> PisrStatus {
    guard(|| put(out, ref_arg(schema, "schema")?.0.len()))
}

/// # Safety
/// `schema` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pisr_schema_free(schema: *mut PisrSchema) {
    free_box(schema)
}

/// Parses an infix equation against `schema`.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_parse(
    text: *const c_char,
    schema: *const PisrSchema,
    out: *mut *mut PisrTree,
) -> PisrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let schema = ref_arg(schema, "schema")?;
        let tree = parse(text, &schema.0).map_err(|e| Failure::new(PisrStatus::Parse, e))?;
        put_box(out, PisrTree(tree))
    })
}

/// # Safety
/// `tree` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_free(tree: *mut PisrTree) {
    free_box(tree)
}

/// Fully parenthesized infix rendering; free with `pisr_string_free`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_render(
    tree: *const PisrTree,
    schema: *const PisrSchema,
    out: *mut *mut c_char,
) -> PisrStatus {
    guard(|| {
        let s = render(&ref_arg(tree, "tree")?.0, &ref_arg(schema, "schema")?.0)
            .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))?;
        put_string(out, s)
    })
}

/// Canonical key (commutative children sorted); free with `pisr_string_free`.
///
/// # Safety
/// `tree` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_canonical_key(
    tree: *const PisrTree,
    out: *mut *mut c_char,
) -> PisrStatus {
    guard(|| put_string(out, ref_arg(tree, "tree")?.0.canonical_key()))
}

/// Node count.
///
/// # Safety
/// `tree` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_size(tree: *const PisrTree, out: *mut usize) -> PisrStatus {
    guard(|| put(out, ref_arg(tree, "tree")?.0.size()))
}

/// Height, where a single leaf has height 0.
///
/// # Safety
/// `tree` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_height(tree: *const PisrTree, out: *mut usize) -> PisrStatus {
    guard(|| put(out, ref_arg(tree, "tree")?.0.height()))
}

/// Evaluates the tree on one row of `len` values. `degenerate` (nullable) is
/// set when the result is non-finite and was replaced by the sentinel.
///
/// # Safety
/// `row` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_evaluate(
    tree: *const PisrTree,
    row: *const f64,
    len: usize,
    out: *mut f64,
    degenerate: *mut bool,
) -> PisrStatus {
    guard(|| {
        let tree = &ref_arg(tree, "tree")?.0;
        if row.is_null() && len > 0 {
            return Err(Failure::new(PisrStatus::NullPointer, "`row` is null"));
        }
        let row: &[f64] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(row, len)
        };
        if let Some(max) = tree.root().max_var_index() {
            if max >= len {
                return Err(Failure::new(
                    PisrStatus::InvalidArgument,
                    format!("tree uses variable {max} but the row has {len} values"),
                ));
            }
        }
        let ev = tree.evaluate(row);
        if !degenerate.is_null() {
            degenerate.write(ev.degenerate);
        }
        put(out, ev.value)
    })
}

fn metric_config(alpha: f64, normalize: bool) -> Result<TreeDistanceConfig, Failure> {
    TreeDistanceConfig::new(alpha, normalize)
        .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))
}

/// Structural distance between two trees.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_distance(
    a: *const PisrTree,
    b: *const PisrTree,
    alpha: f64,
    normalize: bool,
    out: *mut f64,
) -> PisrStatus {
    guard(|| {
        let cfg = metric_config(alpha, normalize)?;
        put(
            out,
            tree_distance(&ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0, &cfg),
        )
    })
}

/// Structural similarity `max(0, 1 - distance)`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_tree_score(
    a: *const PisrTree,
    b: *const PisrTree,
    alpha: f64,
    normalize: bool,
    out: *mut f64,
) -> PisrStatus {
    guard(|| {
        let cfg = metric_config(alpha, normalize)?;
        put(
            out,
            tree_score(&ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0, &cfg),
        )
    })
}

/// Extracts `[dim_corr, simp, sim, "feedback"]` from a critic reply.
/// `feedback` (nullable) receives the feedback string.
///
/// # Safety
/// `raw` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_parse_verdict(
    raw: *const c_char,
    out: *mut PisrVerdict,
    feedback: *mut *mut c_char,
) -> PisrStatus {
    guard(|| {
        if raw.is_null() {
            return Err(Failure::new(PisrStatus::NullPointer, "`raw` is null"));
        }
        let text = CStr::from_ptr(raw).to_string_lossy();
        let v = parse_verdict(&text).map_err(|e| Failure::new(PisrStatus::Parse, e))?;
        put(
            out,
            PisrVerdict {
                dim_corr: v.dim_corr,
                simp: v.simp,
                sim: v.sim,
                c: v.c,
                clamped: v.flags.clamped,
                extra_text: v.flags.extra_text,
            },
        )?;
        if !feedback.is_null() {
            put_string(feedback, v.feedback)?;
        }
        Ok(())
    })
}

/// Generates a scenario dataset. `noise_target` is `features`, `target`,
/// `both` or `none`.
///
/// # Safety
/// Strings must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_dataset_generate(
    scenario: *const c_char,
    n_samples: usize,
    noise_level: f64,
    noise_target: *const c_char,
    seed: u64,
    out: *mut *mut PisrDataset,
) -> PisrStatus {
    guard(|| {
        let spec = ScenarioSpec::new(scenario_arg(str_arg(scenario, "scenario")?)?);
        let target: NoiseTarget = str_arg(noise_target, "noise_target")?
            .parse()
            .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))?;
        let data = generate(
            &spec,
            &SamplingRanges::with_samples(n_samples),
            NoiseSpec::new(noise_level, target),
            seed,
        )
        .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))?;
        put_box(out, PisrDataset(data))
    })
}

/// Loads a dataset CSV together with its JSON sidecar.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_dataset_read(
    path: *const c_char,
    out: *mut *mut PisrDataset,
) -> PisrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let data = read_dataset(Path::new(path)).map_err(|e| Failure::new(PisrStatus::Io, e))?;
        put_box(out, PisrDataset(data))
    })
}

/// Writes the dataset CSV and its JSON sidecar.
///
/// # Safety
/// `data` must be live; `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn pisr_dataset_write(
    data: *const PisrDataset,
    path: *const c_char,
) -> PisrStatus {
    guard(|| {
        let data = ref_arg(data, "data")?;
        let path = str_arg(path, "path")?;
        write_dataset(&data.0, Path::new(path)).map_err(|e| Failure::new(PisrStatus::Io, e))
    })
}

/// Number of rows.
///
/// # Safety
/// `data` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_dataset_len(data: *const PisrDataset, out: *mut usize) -> PisrStatus {
    guard(|| put(out, ref_arg(data, "data")?.0.len()))
}

/// Measured SNR of the target column in dB; infinity when noiseless.
///
/// # Safety
/// `data` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_dataset_target_snr_db(
    data: *const PisrDataset,
    out: *mut f64,
) -> PisrStatus {
    guard(|| {
        put(
            out,
            ref_arg(data, "data")?
                .0
                .snr
                .target
                .db()
                .unwrap_or(f64::INFINITY),
        )
    })
}

/// # Safety
/// `data` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pisr_dataset_free(data: *mut PisrDataset) {
    free_box(data)
}

/// Runs one search. `config_json` (nullable) is an engine configuration
/// object whose missing fields take defaults. `critic` (nullable) is `null`
/// or `mock`; network critics are only available from the CLI.
///
/// # Safety
/// `data` must be live; strings must be valid or null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_search_run(
    data: *const PisrDataset,
    config_json: *const c_char,
    critic: *const c_char,
    out: *mut *mut PisrSearchResult,
) -> PisrStatus {
    guard(|| {
        let data = &ref_arg(data, "data")?.0;
        let cfg: EngineConfig = if config_json.is_null() {
            EngineConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))?
        };
        let critic_name = if critic.is_null() {
            "null"
        } else {
            str_arg(critic, "critic")?
        };
        let mock;
        let critic: Option<&dyn Critic> = match critic_name {
            "null" => None,
            "mock" => {
                mock = MockCritic::new(data.scenario.clone());
                Some(&mock)
            }
            other => {
                return Err(Failure::new(
                    PisrStatus::InvalidArgument,
                    format!("unknown critic `{other}` (expected null or mock)"),
                ))
            }
        };
        let outcome =
            gpengine::run(data, &cfg, critic).map_err(|e| Failure::new(PisrStatus::Search, e))?;
        put_box(out, PisrSearchResult(outcome.result))
    })
}

/// Best equation of a search; free with `pisr_string_free`.
///
/// # Safety
/// `result` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_search_result_best_equation(
    result: *const PisrSearchResult,
    out: *mut *mut c_char,
) -> PisrStatus {
    guard(|| put_string(out, ref_arg(result, "result")?.0.best_equation.clone()))
}

/// Composite loss of the best equation.
///
/// # Safety
/// `result` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_search_result_loss(
    result: *const PisrSearchResult,
    out: *mut f64,
) -> PisrStatus {
    guard(|| put(out, ref_arg(result, "result")?.0.breakdown.loss))
}

/// Full result (equation, loss breakdown, trace, config) as JSON; free with
/// `pisr_string_free`.
///
/// # Safety
/// `result` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pisr_search_result_json(
    result: *const PisrSearchResult,
    out: *mut *mut c_char,
) -> PisrStatus {
    guard(|| {
        let json = serde_json::to_string(&ref_arg(result, "result")?.0)
            .map_err(|e| Failure::new(PisrStatus::InvalidArgument, e))?;
        put_string(out, json)
    })
}

/// # Safety
/// `result` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pisr_search_result_free(result: *mut PisrSearchResult) {
    free_box(result)
}
