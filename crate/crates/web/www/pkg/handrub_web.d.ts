/* tslint:disable */
/* eslint-disable */

/**
 * Applies the k-of-n rule to a window given as consecutive rows of nine
 * scores.
 */
export function decide_json(scores: Float64Array, target: number, tau: number, k_required: number): string;

/**
 * `{"present", "coverage", "foreground", "roi"}` for the frame.
 */
export function presence_json(rgba: Uint8Array, width: number, height: number, reference_luma: number, tolerance: number, roi_fraction: number, min_coverage: number): string;

/**
 * The input with foreground pixels tinted red and background dimmed.
 * Empty when the input size does not match.
 */
export function segment_overlay(rgba: Uint8Array, width: number, height: number, reference_luma: number, tolerance: number): Uint8Array;

/**
 * Simulates sessions with normally distributed step durations; `means` has
 * one entry per step, 2 through 8.
 */
export function simulate_json(means: Float64Array, sigma: number, sessions: number, seed: number): string;

/**
 * RGBA image of a generated gesture frame of class `class`.
 */
export function synthetic_frame(_class: number, seed: number, width: number, height: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly decide_json: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly presence_json: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly segment_overlay: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly simulate_json: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly synthetic_frame: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
