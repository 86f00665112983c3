/* tslint:disable */
/* eslint-disable */

/**
 * Static pipeline over one bundle. Returns the matrix (sparse cells), its
 * statistics, the access and inferred vectors, and the gap report.
 */
export function analyze(framework: string, app: string, manifest: string, services: string, sinks: string, mode: string, strict: boolean): string;

/**
 * Bounded exhaustive execution; returns the recorded checks, invoked
 * entries and the exhaustion flag.
 */
export function execute_trace(framework: string, app: string, manifest: string, services: string, sinks: string, loop_bound: number, path_budget: bigint, step_budget: bigint): string;

/**
 * Seeded corpus bundle; the page loads the returned documents into its
 * editors.
 */
export function generate(seed: bigint, classes: number, methods: number, perms: number, services: number, acyclic: boolean): string;

/**
 * The bundled worked example, for first paint.
 */
export function sample_bundle(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly analyze: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number) => [number, number, number, number];
    readonly execute_trace: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: bigint, m: bigint) => [number, number, number, number];
    readonly generate: (a: bigint, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly sample_bundle: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
