/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const decide_json: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const presence_json: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
export const segment_overlay: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const simulate_json: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const synthetic_frame: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
