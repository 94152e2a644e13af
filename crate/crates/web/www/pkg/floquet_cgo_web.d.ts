/* tslint:disable */
/* eslint-disable */

/**
 * `|v|` on the slice `x₀ = 0` of the cell, row-major in `(x₁, x₂)`.
 */
export class CgoSlice {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    values(): Float64Array;
    readonly iterations: number;
    /**
     * `‖r‖_{L²}` of the remainder.
     */
    readonly remainder: number;
    readonly size: number;
    readonly tau: number;
}

export function cgo_slice(theta: number, k_twice: number, r: number, eta: number, amp: number, size: number): CgoSlice;

export function kelvin_circle(radius: number, scale: number, samples: number): Float64Array;

export function kelvin_point(radius: number, x1: number, x2: number): Float64Array;

export function schedule_curve(alpha: number, n: number, lo: number, hi: number, count: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_cgoslice_free: (a: number, b: number) => void;
    readonly cgo_slice: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly cgoslice_iterations: (a: number) => number;
    readonly cgoslice_remainder: (a: number) => number;
    readonly cgoslice_size: (a: number) => number;
    readonly cgoslice_tau: (a: number) => number;
    readonly cgoslice_values: (a: number) => [number, number];
    readonly kelvin_circle: (a: number, b: number, c: number) => [number, number, number, number];
    readonly kelvin_point: (a: number, b: number, c: number) => [number, number, number, number];
    readonly schedule_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
